from functools import lru_cache

import pytest
from hypothesis import HealthCheck, settings

from coarse_embed.graph import build_graph
from coarse_embed.groups import parse_group_spec

settings.register_profile("repo", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")

EXPRS = {
    "free2": "free(2)",
    "z2": "abelian(2)",
    "zxz": "free_product(free(1),free(1))",
    "z2xz": "free_product(abelian(2),free(1))",
}


@lru_cache(maxsize=None)
def ball(name: str, radius: int):
    """Shared Cayley balls; graphs are immutable so caching across tests is safe."""
    return build_graph(parse_group_spec(EXPRS.get(name, name), radius))


@pytest.fixture
def cayley():
    return ball


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        claims = mod.RESULTS[n]
        status = "PASS" if all(ok for _, ok, *_ in claims) else "FAIL"
        tr.write_line(f"criterion {n}: {status}")
        for claim, ok, detail, seconds, budget in claims:
            tr.write_line(f"    [{'ok' if ok else 'FAIL'}] {claim} ({seconds:.1f}s of {budget:.0f}s): {detail}")
