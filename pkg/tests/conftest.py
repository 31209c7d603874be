import pytest

from zicount.dataset import trajan
from zicount.fitting import ModelSpec, fit

CM = "~0+photoperiod"
PUBLISHED_TERMS = {
    "ZIP": {"mu": CM, "sigma": CM},
    "ZINB": {"mu": CM, "sigma": CM, "nu": CM},
    "ZIPIG": {"mu": CM, "nu": CM},
    "ZIBNB": {"mu": CM, "tau": CM},
}


@pytest.fixture(scope="session")
def trajan_data():
    return trajan()


@pytest.fixture(scope="session")
def published_fits(trajan_data):
    """The four Trajan fits with their published predictors, fitted once."""
    return {fam: fit(ModelSpec.build(fam, terms), trajan_data) for fam, terms in PUBLISHED_TERMS.items()}


def greedy_violations(trace):
    """Check a selection trace: within every round (candidates scored against
    one current model) the accepted move has the lowest criterion, and each
    acceptance strictly improves on the previous one in the same pass.
    Returns a list of human-readable problems (empty when sound)."""
    problems = []
    recs = trace.records
    i = 0
    last = {}
    while i < len(recs):
        key = (recs[i].step, recs[i].param)
        labels, j = set(), i
        while j < len(recs) and (recs[j].step, recs[j].param) == key and recs[j].candidate not in labels:
            labels.add(recs[j].candidate)
            j += 1
        rnd = recs[i:j]
        acc = [r for r in rnd if r.accepted]
        if len(acc) > 1:
            problems.append(f"step {key}: {len(acc)} acceptances in one round")
        if acc:
            best = acc[0]
            for r in rnd:
                if r.gaic is not None and r.gaic < best.gaic:
                    problems.append(f"step {key}: accepted {best.candidate} ({best.gaic:.4f}) "
                                    f"but {r.candidate} scored {r.gaic:.4f}")
            if key in last and not best.gaic < last[key]:
                problems.append(f"step {key}: acceptance did not lower GAIC")
            last[key] = best.gaic
        i = j
    return problems


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
