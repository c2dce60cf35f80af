import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rationale_kgqa.kg import KnowledgeGraph, from_labeled_triples

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


FIG1_TRIPLES = [
    ("Tim Burton", "birthplace", "California"),
    ("Batman 1989", "director", "Tim Burton"),
    ("Batman 1989", "cast member", "Michael Keaton"),
]


@pytest.fixture
def fig1_kg() -> KnowledgeGraph:
    return from_labeled_triples(FIG1_TRIPLES)


@pytest.fixture
def slu_kg() -> KnowledgeGraph:
    # university -> city -> state, plus the country route that yields the competing expression
    return from_labeled_triples([
        ("Saint Louis University", "containedby", "St. Louis"),
        ("St. Louis", "state", "Missouri"),
        ("Saint Louis University", "containedby", "USA"),
        ("Missouri", "administrative parent", "USA"),
    ])


def random_kg(rng: np.random.Generator, n_entities: int, n_relations: int, n_triples: int) -> KnowledgeGraph:
    rows = np.stack([rng.integers(n_entities, size=n_triples), rng.integers(n_relations, size=n_triples),
                     rng.integers(n_entities, size=n_triples)], axis=1)
    rows = np.unique(rows, axis=0)
    return KnowledgeGraph([f"E{i}" for i in range(n_entities)], [f"rel {i}" for i in range(n_relations)], rows)


# one summary line per acceptance criterion, printed after the run
_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    number = props["criterion"]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        outcome = "PASS" if report.outcome == "passed" else "FAIL"
        _CRITERIA[number] = (outcome, props.get("title", ""), props.get("measured", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcome, title, measured = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {outcome}: {title}" + (f" [{measured}]" if measured else ""))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties.extend([("criterion", mark.args[0]), ("title", mark.args[1])])
