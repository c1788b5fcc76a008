import numpy as np
import pytest

from polylink.graph import build_graph, split_edges


def planted_records(n_drugs=24, n_proteins=16, seed=0):
    """Two drug communities; each side effect prefers one community.

    Gives training something learnable without being trivial: se0 connects
    mostly inside community A, se1 inside community B, targets correlate
    with community, proteins form a sparse random interactome.
    """
    rng = np.random.default_rng(seed)
    community = rng.integers(0, 2, size=n_drugs)
    combos = []
    for se, wanted in (("se0", 0), ("se1", 1)):
        for i in range(n_drugs):
            for j in range(i + 1, n_drugs):
                same = community[i] == wanted and community[j] == wanted
                p = 0.6 if same else 0.03
                if rng.random() < p:
                    combos.append((f"D{i}", f"D{j}", se))
    ppi = []
    for a in range(n_proteins):
        for b in range(a + 1, n_proteins):
            if rng.random() < 0.08:
                ppi.append((f"P{a}", f"P{b}"))
    targets = []
    for i in range(n_drugs):
        for a in range(n_proteins):
            aligned = (a % 2) == community[i]
            if rng.random() < (0.15 if aligned else 0.02):
                targets.append((f"D{i}", f"P{a}"))
    return ppi, targets, combos


@pytest.fixture(scope="session")
def planted():
    ppi, targets, combos = planted_records()
    graph = build_graph(ppi, targets, combos, [])
    split = split_edges(graph, seed=13)
    return graph, split
