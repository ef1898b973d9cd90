"""Collects acceptance-criterion outcomes and prints one line per criterion."""
from collections import defaultdict

import pytest

CRITERIA = {
    1: "FSPL frequency scaling (+60 dB per 1000x)",
    2: "mirror room vs image method within 1 dB",
    3: "laptop PDP structure at 0.3 / 1 / 3 THz",
    4: "nLoS minimum SNR 1-3 m from the plug = 0 +/- 3 dB",
    5: "ieee laptop capacity > 100 Gbit/s, throughput 8-12 Gbit/s",
    6: "thz laptop capacity >= 1 Tbit/s and SNR >= ieee per LoS cell",
    7: "property suites",
}

_results: dict[int, list[tuple[str, str, list]]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")
    config.addinivalue_line("markers", "acceptance: calibration-anchored acceptance suite (slow)")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results[marker.args[0]].append((item.name, report.outcome, list(item.user_properties)))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, label in CRITERIA.items():
        runs = _results.get(n)
        if not runs:
            tr.write_line(f"criterion {n}: NOT RUN  {label}")
            continue
        ok = all(outcome == "passed" for _, outcome, _ in runs)
        detail = "; ".join(f"{k}={v}" for _, _, props in runs for k, v in props)
        tr.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else ""))
