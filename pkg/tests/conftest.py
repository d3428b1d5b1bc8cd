import pytest

from orbsde.harness.expr import CoefficientExpr
from orbsde.model import CostStructure, SwitchingProblem

_ACCEPTANCE = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        number, title = marker.args
        entry = _ACCEPTANCE.setdefault(number, {"title": title, "ok": True, "notes": []})
        entry["ok"] = entry["ok"] and report.outcome == "passed"
        for key, value in item.user_properties:
            if key == "detail":
                entry["notes"].append(str(value))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[number]
        status = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"[{status}] {number:>2}. {e['title']}"
                                    + (f" ({notes})" if notes else ""))


def expr_problem(f, g, c, m=1, q=1, b=None, sigma=None, x0=None, T=1.0, ly=1.0, lz=1.0):
    """Problem from expression strings; ``f``/``g`` lists, ``c`` a d x d table."""
    d = len(f)
    xs = [f"x{k + 1}" for k in range(m)]
    full = xs + [f"y{k + 1}" for k in range(d)] + [f"z{k + 1}" for k in range(q)]

    def mk(v, names):
        return float(v) if isinstance(v, (int, float)) else CoefficientExpr(v, names)

    b = [0.0] * m if b is None else b
    sigma = [[1.0] * q for _ in range(m)] if sigma is None else sigma
    return SwitchingProblem(
        m=m, q=q, d=d,
        drift=[mk(v, xs) for v in b],
        diffusion=[[mk(v, xs) for v in row] for row in sigma],
        drivers=[mk(v, full) for v in f],
        terminal=[mk(v, xs) for v in g],
        costs=CostStructure([[mk(v, xs) for v in row] for row in c]),
        x0=[0.0] * m if x0 is None else x0, T=T, lipschitz_y=ly, lipschitz_z=lz)


@pytest.fixture
def make_problem():
    return expr_problem
