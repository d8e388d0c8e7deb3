"""Session-wide solver audit.

Every call to ``branch_and_bound`` or ``brute_force`` made anywhere in the
suite is checked for flow conservation, source/sink balance, tight ``z``
and (for branch-and-bound) the LP/bound/incumbent ordering.
"""

import functools
import sys

import pytest

import _support
import tbc
import tbc.pipeline
import tbc.solver
import tbc.solver.bnb
import tbc.solver.brute


def _audited(fn, check_bounds):
    @functools.wraps(fn)
    def wrapper(model, *args, **kw):
        sol = fn(model, *args, **kw)
        problems = _support.audit_solution(model, sol, check_bounds)
        _support.AUDIT["solutions"] += 1
        if problems:
            _support.AUDIT["violations"] += 1
            raise AssertionError("solver output failed audit: " + "; ".join(problems))
        return sol
    wrapper.__wrapped_original__ = fn
    return wrapper


def _install():
    originals = {"branch_and_bound": (tbc.solver.bnb.branch_and_bound, True),
                 "brute_force": (tbc.solver.brute.brute_force, False)}
    for name, (fn, bounds) in originals.items():
        wrapped = _audited(fn, bounds)
        for mod in list(sys.modules.values()):
            if getattr(mod, "__name__", "").startswith("tbc") and getattr(mod, name, None) is fn:
                setattr(mod, name, wrapped)


_install()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    tr = terminalreporter
    if _support.AUDIT["solutions"]:
        tr.write_sep("-", "solver audit")
        tr.write_line(f"solver outputs audited: {_support.AUDIT['solutions']}, "
                      f"violations: {_support.AUDIT['violations']}")
    if _support.ACCEPTANCE:
        tr.write_sep("-", "acceptance criteria")
        for n in sorted(_support.ACCEPTANCE):
            tr.write_line(_support.ACCEPTANCE[n])


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(12345)
