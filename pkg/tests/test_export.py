import numpy as np

from homwave.export import load_field, save_corrector_set, save_field, write_csv
from homwave.media import build_grid, sample_periodic


def test_field_round_trip(tmp_path, laminate):
    base = str(tmp_path / "field")
    save_field(laminate, base)
    back = load_field(base)
    np.testing.assert_array_equal(back.values, laminate.values)
    assert back.grid == laminate.grid
    assert back.kind == laminate.kind


def test_corrector_export_manifest(tmp_path):
    g = build_grid(1, 1.0, 64)
    f = sample_periodic(g, "cosine")
    from homwave.correctors import build_corrector_set

    cs = build_corrector_set(f, N=2)
    files = save_corrector_set(cs, str(tmp_path))
    assert any(p.endswith("corrector_manifest.json") for p in files)
    assert any("phi1" in p for p in files)
    import json

    with open([p for p in files if p.endswith("manifest.json")][0]) as fh:
        man = json.load(fh)
    assert man["N"] == 2
    assert "1" in man["growth_constants"]


def test_state_and_eigenpair_exports(tmp_path):
    g = build_grid(1, 8.0, 256)
    f = sample_periodic(g, "constant", cell=8.0)
    from homwave.export import save_eigenpairs, save_state
    from homwave.hetwave import WaveState, discrete_eigenpairs

    st = WaveState.from_rest(g, np.sin(g.axis()))
    files = save_state(st, str(tmp_path / "snap"))
    assert len(files) == 4
    pairs = discrete_eigenpairs(f, 2, bc="dirichlet")
    files = save_eigenpairs(pairs, str(tmp_path))
    assert any(p.endswith("eigenpairs.csv") for p in files)
    header = open([p for p in files if p.endswith(".csv")][0]).readline()
    assert header.strip() == "index,lambda,residual,participation_ratio,bc"


def test_csv_full_precision(tmp_path):
    path = str(tmp_path / "t.csv")
    x = 1.0 / 3.0
    write_csv(path, ["a", "b"], [(x, 7)])
    line = open(path).read().splitlines()[1]
    val = float(line.split(",")[0])
    assert val == x
