import math

import numpy as np
import pytest

from omnisense.datasets import LightPath, SweepDataset, read_sweep_csv, synthesize_sweep, write_sweep_csv
from omnisense.errors import InputError
from omnisense.grid import SweepSpec, full_circle_count
from omnisense.response import Design, NoiseSpec


def test_default_spec():
    s = SweepSpec()
    assert s.d_step == 10.0 and s.arc_step == 10.0 and s.d_range == (70.0, 450.0)
    assert s.distances().size == 39


def test_angular_count_tracks_arc_length():
    for d in (70.0, 200.0, 450.0):
        n = SweepSpec().angular_count(d)
        assert n % 8 == 0
        # Rounded to the nearest multiple of 8 of the nominal count.
        assert abs(n - 2 * math.pi * d / 10.0) <= 4
    assert full_circle_count(1.0, 10.0) == 8


def test_full_circle_angles():
    a = SweepSpec().angles(100.0)
    assert a[0] == 0.0 and a[-1] < 360.0
    assert np.allclose(np.diff(a), 360.0 / a.size)


def test_partial_range_angles():
    s = SweepSpec((100, 100), 10, 10, theta_range=(0.0, 30.0))
    a = s.angles(100.0)
    assert a[1] - a[0] == pytest.approx(math.degrees(0.1))
    assert a[-1] <= 30.0


def test_size_matches_points():
    s = SweepSpec((70, 150), 20, 15)
    d, t = s.points()
    assert d.size == t.size == s.size() == sum(s.angular_count(x) for x in s.distances())


def test_invalid_specs():
    with pytest.raises(InputError):
        SweepSpec(d_step=0)
    with pytest.raises(InputError):
        SweepSpec((100, 50))


def test_dataset_validation():
    with pytest.raises(InputError):
        SweepDataset(Design.FLOWER, LightPath.FREE, [100.0], [360.0], np.ones((1, 8)))
    with pytest.raises(InputError):
        SweepDataset(Design.FLOWER, LightPath.FREE, [100.0, 110.0], [1.0], np.ones((1, 8)))
    with pytest.raises(InputError):
        SweepDataset(Design.FLOWER, LightPath.FREE, [100.0], [1.0], np.full((1, 8), np.nan))


def test_csv_round_trip(tmp_path, fmodel):
    spec = SweepSpec((70, 120), 10, 20)
    rng = np.random.default_rng(1)
    free = synthesize_sweep(fmodel, spec, NoiseSpec(0.01), rng)
    post = synthesize_sweep(fmodel, spec, NoiseSpec(0.01), rng, LightPath.POST)
    path = tmp_path / "s.csv"
    write_sweep_csv([post, free], path)
    a, b = read_sweep_csv(path)
    assert a.path is LightPath.FREE and b.path is LightPath.POST
    for x, y in ((a, free), (b, post)):
        assert np.array_equal(x.d, y.d) and np.array_equal(x.theta, y.theta)
        assert np.array_equal(x.signals, y.signals)


def test_csv_rejects_bad_rows(tmp_path):
    header = "design,path,d_mm,theta_deg," + ",".join(f"S{i}" for i in range(8))
    p = tmp_path / "bad.csv"
    p.write_text(header + "\nflower,free,100,0," + ",".join(["1"] * 7 + ["nan"]) + "\n")
    with pytest.raises(InputError):
        read_sweep_csv(p)
    p.write_text(header + "\nflower,free,100,0,1,2\n")
    with pytest.raises(InputError):
        read_sweep_csv(p)
    p.write_text("a,b\n")
    with pytest.raises(InputError):
        read_sweep_csv(p)
    rows = ["flower,free,100,0," + ",".join(["1"] * 8), "vertical,free,100,0," + ",".join(["1"] * 8)]
    p.write_text(header + "\n" + "\n".join(rows) + "\n")
    with pytest.raises(InputError):
        read_sweep_csv(p)
    with pytest.raises(InputError):
        read_sweep_csv(tmp_path / "missing.csv")


def test_synthesis_deterministic(vmodel):
    spec = SweepSpec((70, 100), 10, 20)
    a = synthesize_sweep(vmodel, spec, NoiseSpec(0.02, seed=3))
    b = synthesize_sweep(vmodel, spec, NoiseSpec(0.02, seed=3))
    assert np.array_equal(a.signals, b.signals)
    assert len(a) == spec.size()
