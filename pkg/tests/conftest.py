import numpy as np

from geoplih.egnn import LayerConfig
from geoplih.molgraph import Atom, build_graph

ELEMENTS = ("C", "N", "O", "S", "P", "F")


def random_atoms(rng, n, tag, centre=(0.0, 0.0, 0.0), spread=None, serial0=1):
    spread = spread if spread is not None else 1.2 * n ** (1 / 3)
    pos = np.asarray(centre) + rng.uniform(-spread, spread, size=(n, 3))
    return [Atom(ELEMENTS[rng.integers(len(ELEMENTS))], tuple(p), tag, serial0 + k)
            for k, p in enumerate(pos)]


def random_complex(rng, n_protein, n_ligand, protein_edge=4.0, ligand_edge=2.0):
    """Protein and ligand graphs with overlapping extents so cross pairs exist."""
    prot = random_atoms(rng, n_protein, "protein")
    lig = random_atoms(rng, n_ligand, "ligand", centre=rng.normal(size=3), serial0=1000)
    return build_graph(prot, protein_edge), build_graph(lig, ligand_edge)


def random_rigid(rng, reflect=None):
    from scipy.spatial.transform import Rotation
    R = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
    if reflect if reflect is not None else rng.random() < 0.5:
        R = R @ np.diag([1.0, 1.0, -1.0])
    return R, rng.normal(scale=5.0, size=3)


def small_cfg(**kw):
    base = dict(feature_dim=8, hidden_dim=8, n_layers=2)
    base.update(kw)
    return LayerConfig(**base)


# one summary line per acceptance criterion

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")
    config._criteria = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call" and call.excinfo is None:
        return
    number, title = mark.args
    passed = call.excinfo is None
    prev = item.config._criteria.get(number, (title, True))
    item.config._criteria[number] = (title, prev[1] and passed)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed = results[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}")
