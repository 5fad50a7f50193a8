import dataclasses

import numpy as np
import pytest

from gsapme.allocations import pme_from_game, shapley_from_game
from gsapme.errors import ModelError
from gsapme.estimation import estimate_game
from gsapme.games import exact_game_discrete
from gsapme.models.benchmarks import (ishigami_first_order, ishigami_sample, ishigami_total_indices,
                                      linear_gaussian_game, linear_gaussian_sample)
from gsapme.models.discrete import DiscreteModel
from gsapme.models.dose import (CORRELATION_TARGETS, DoseTables, FILTERS, GENDERS, KVPS, MODELS, ScanRecord,
                                ctdi_vol, filter_for, ncict_sample, nearest_phantom, organ_dose, organ_doses,
                                records, synth_dose_tables)
from gsapme.models.sir import integrate_sir, sir_demo_sample, sir_outputs

TABLES = synth_dose_tables(0)


def scan(**kw):
    base = dict(age=10, gender="F", start=3, end=20, mAs=150, kVp=120, pitch=1.0, model=4)
    base.update(kw)
    return ScanRecord(**base)


def ishigami_mc_totals(a, b, n=400_000, seed=0):
    """Jansen pick-freeze estimator, independent of the closed form."""
    from gsapme.models.benchmarks import ishigami
    rng = np.random.default_rng(seed)
    x = rng.uniform(-np.pi, np.pi, (n, 3))
    z = rng.uniform(-np.pi, np.pi, (n, 3))
    fx = ishigami(x, a, b)
    out = []
    for i in range(3):
        xi = x.copy()
        xi[:, i] = z[:, i]
        out.append(0.5 * np.mean((fx - ishigami(xi, a, b)) ** 2) / fx.var())
    return np.array(out)


def test_ishigami_analytic_indices():
    np.testing.assert_allclose(ishigami_total_indices(), [0.55759, 0.44241, 0.24368], atol=5e-6)
    # the rounded values quoted for this benchmark
    np.testing.assert_allclose(ishigami_total_indices(), [0.5574, 0.4424, 0.2437], atol=5e-4)
    np.testing.assert_allclose(ishigami_total_indices(), ishigami_mc_totals(7.0, 0.1), atol=0.01)
    np.testing.assert_allclose(ishigami_first_order(), [0.3139, 0.4424, 0.0], atol=5e-5)
    assert ishigami_total_indices(7.0, 0.0)[2] == 0.0
    np.testing.assert_allclose(ishigami_total_indices(0.0, 0.0), [1.0, 0.0, 0.0])
    ds = ishigami_sample(50, seed=2)
    assert ds.d == 3 and ds.n == 50
    assert np.all(np.abs(np.column_stack([ds.columns[c] for c in ds.input_names])) <= np.pi)
    with pytest.raises(ModelError):
        ishigami_sample(0)


def test_linear_gaussian_game():
    joke = linear_gaussian_game([1.0, 0.0], [[1, 0.9], [0.9, 1]])
    np.testing.assert_allclose(joke.values, [0, 1, 0.81, 1], atol=1e-14)
    np.testing.assert_allclose(shapley_from_game(joke).shares, [0.595, 0.405], atol=1e-12)
    assert pme_from_game(joke).shares.tolist() == [1.0, 0.0]
    for rho in (0.0, 0.4, -0.7):
        g = linear_gaussian_game([1.0, 1.0], [[1, rho], [rho, 1]])
        np.testing.assert_allclose(shapley_from_game(g).shares, [0.5, 0.5], atol=1e-12)
    with pytest.raises(ModelError):
        linear_gaussian_sample(10, [1, 1], [[1, 1.2], [1.2, 1]], 0)
    with pytest.raises(ModelError):
        linear_gaussian_game([1, 1], [[1, 0.2], [0.3, 1]])


def test_linear_gaussian_sample_matches_game():
    corr = np.array([[1, 0.5, 0.2], [0.5, 1, 0.0], [0.2, 0.0, 1]])
    ds = linear_gaussian_sample(20_000, [1.0, -0.5, 2.0], corr, 7)
    x = np.column_stack([ds.columns[c] for c in ds.input_names])
    np.testing.assert_allclose(np.corrcoef(x, rowvar=False), corr, atol=0.03)
    np.testing.assert_allclose(ds.y, x @ [1.0, -0.5, 2.0])


def test_discrete_model_sampling():
    model = DiscreteModel.from_function([[0, 1, 2], [0, 1]], lambda x: x[0] * x[1] + x[0],
                                        joint=lambda x: 1 + x[0])
    assert model.d == 2 and model.probs.sum() == pytest.approx(1.0)
    ds = model.sample(30_000, seed=1)
    freq = np.bincount(ds.columns["X1"].astype(int)) / ds.n
    np.testing.assert_allclose(freq, [1 / 6, 2 / 6, 3 / 6], atol=0.01)
    g = estimate_game(ds, k=3)
    np.testing.assert_allclose(g.values, exact_game_discrete(model).values, atol=0.05)


def test_sir_conservation_and_limits():
    t, s, i, r = integrate_sir([0.3, 0.5, 0.2], [0.1, 0.2, 0.05], [1e-3, 1e-2, 1e-4])
    np.testing.assert_allclose(s + i + r, 1.0, atol=1e-8)
    # no epidemic when beta < gamma: the infected fraction only decays
    out = sir_outputs(0.05, 0.2, 0.01)
    assert out["peak_infected"][0] == pytest.approx(0.01)
    assert out["peak_time"][0] == 0.0
    # without recovery everybody is eventually infected
    assert sir_outputs(0.5, 1e-9, 0.01, t_max=400.0)["final_size"][0] == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(ModelError):
        integrate_sir(0.3, 0.1, 1.5)


def test_sir_rk4_order():
    # halving the step shrinks the error about 16 times
    ref = sir_outputs(0.4, 0.1, 1e-3, t_max=60.0, dt=0.01)["final_size"][0]
    e1 = abs(sir_outputs(0.4, 0.1, 1e-3, t_max=60.0, dt=0.8)["final_size"][0] - ref)
    e2 = abs(sir_outputs(0.4, 0.1, 1e-3, t_max=60.0, dt=0.4)["final_size"][0] - ref)
    assert 10 < e1 / e2 < 22


def test_sir_step_halving():
    # a huge step overshoots below zero and is halved until it does not
    t, s, i, r = integrate_sir(3.0, 0.1, 0.5, t_max=20.0, dt=5.0)
    assert s.min() >= 0 and i.min() >= 0
    assert t[1] < 5.0


def test_sir_sample():
    corr = [[1, 0.3, 0], [0.3, 1, 0], [0, 0, 1]]
    ds = sir_demo_sample(300, corr, seed=3, output="final_size")
    assert ds.input_names == ["beta", "gamma", "I0"]
    assert np.all((ds.y >= 0) & (ds.y <= 1))
    with pytest.raises(ModelError):
        sir_demo_sample(50, corr, 0, output="deaths")
    with pytest.raises(ModelError):
        sir_demo_sample(50, [[1, 2, 0], [2, 1, 0], [0, 0, 1]], 0)


def test_ctdi_vol():
    nct = TABLES.nctdiw_value(4, 120, "head")
    assert ctdi_vol(4, 120, "head", 100, 1.0, TABLES) == nct
    fake = DoseTables(np.full(TABLES.nctdiw.shape, 10.0), TABLES.dc)
    assert ctdi_vol(1, 80, "body", 200, 0.5, fake) == pytest.approx(40.0)
    with pytest.raises(ModelError):
        ctdi_vol(4, 120, "head", 100, 0.0, TABLES)
    with pytest.raises(ModelError):
        ctdi_vol(13, 120, "head", 100, 1.0, TABLES)


def test_organ_dose_hand_sum():
    dc = np.zeros(TABLES.dc.shape)
    dc[0, ..., 4:7] = [0.1, 0.2, 0.3]
    fake = DoseTables(np.full(TABLES.nctdiw.shape, 10.0), dc)
    rec = scan(start=5, end=7, mAs=200, pitch=0.5)
    assert organ_dose(rec, "brain", fake, "head") == pytest.approx(24.0)
    assert organ_dose(scan(start=30, end=40), "brain", fake, "head") == 0.0
    single = scan(start=9, end=9)
    expected = ctdi_vol(4, 120, "head", 150, 1.0, TABLES) * TABLES.dc_value("brain", 10, "F", 120, "head", 9)
    assert organ_dose(single, "brain", TABLES, "head") == pytest.approx(expected, rel=1e-14)


def test_organ_dose_structure():
    rec = scan()
    full = organ_dose(rec, "brain", TABLES, exam_class="head")
    head = organ_dose(dataclasses.replace(rec, end=11), "brain", TABLES, exam_class="head")
    tail = organ_dose(dataclasses.replace(rec, start=12), "brain", TABLES, exam_class="head")
    assert full == pytest.approx(head + tail, rel=1e-12)
    assert organ_dose(dataclasses.replace(rec, mAs=300), "brain", TABLES, "head") == pytest.approx(2 * full, rel=1e-12)
    assert organ_dose(dataclasses.replace(rec, pitch=0.5), "brain", TABLES, "head") == pytest.approx(2 * full, rel=1e-12)
    assert organ_dose(rec, "brain", TABLES) != full  # body filter by default


def test_vectorised_doses_match_records():
    ds = ncict_sample(200, "multiple", TABLES, 4, organ="rbm")
    loop = [organ_dose(r, "rbm", TABLES, exam_class="multiple") for r in records(ds)]
    np.testing.assert_allclose(ds.y, loop, rtol=1e-12)
    np.testing.assert_allclose(organ_doses(ds.columns, "rbm", TABLES, "body"), loop, rtol=1e-12)


def test_scan_record_validation():
    for bad in (dict(age=19), dict(gender="X"), dict(start=21), dict(end=166), dict(mAs=3),
                dict(kVp=110), dict(pitch=1.8), dict(model=0)):
        with pytest.raises(ModelError):
            scan(**bad)


def test_phantoms_and_filters():
    assert [nearest_phantom(a) for a in (0, 3, 4, 7, 8, 12, 13, 16, 17, 18)] == [0, 1, 5, 5, 10, 10, 15, 15, 18, 18]
    assert nearest_phantom(3, (1, 5)) == 1  # equidistant: younger phantom
    assert filter_for("head") == "head"
    assert {filter_for(c) for c in ("chest", "abdopelvis", "multiple")} == {"body"}
    with pytest.raises(ModelError):
        filter_for("knee")


def test_synthetic_tables():
    again = synth_dose_tables(0)
    assert np.array_equal(again.nctdiw, TABLES.nctdiw) and np.array_equal(again.dc, TABLES.dc)
    assert np.all(TABLES.nctdiw > 0) and np.all(TABLES.dc >= 0)
    # nCTDIw grows with kVp and the head phantom reads more than the body phantom
    assert np.all(np.diff(TABLES.nctdiw, axis=1) > 0)
    assert np.all(TABLES.nctdiw[:, :, 0] > TABLES.nctdiw[:, :, 1])
    brain = TABLES.dc[0]
    assert np.all(brain[..., 140] < brain[..., 10])
    peak = brain.argmax(axis=-1)
    after = np.diff(brain, axis=-1)
    for idx in np.ndindex(peak.shape):
        assert np.all(after[idx][peak[idx]:] <= 0)
    with pytest.raises(ModelError):
        DoseTables(-TABLES.nctdiw, TABLES.dc)


def test_tables_json_roundtrip(tmp_path):
    path = tmp_path / "tables.json"
    TABLES.to_json(path)
    back = DoseTables.from_json(path)
    assert np.array_equal(back.nctdiw, TABLES.nctdiw) and np.array_equal(back.dc, TABLES.dc)
    assert back.phantom_ages == TABLES.phantom_ages
    import json
    doc = json.loads(path.read_text())
    doc["DC"] = doc["DC"][:-1]
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelError, match="incomplete"):
        DoseTables.from_json(path)


@pytest.mark.parametrize("exam_class", ["head", "chest", "abdopelvis", "multiple"])
def test_ncict_correlations(exam_class):
    ds = ncict_sample(8848, exam_class, TABLES, 11)
    assert ds.n == 8848 and ds.d == 8
    c = ds.columns
    for (a, b), target in CORRELATION_TARGETS.items():
        r = np.corrcoef(c[a].astype(float), c[b].astype(float))[0, 1]
        assert abs(r - target) <= 0.1, (a, b, r)
    assert np.all(c["start"] <= c["end"])
    r = np.corrcoef(c["start"].astype(float), c["end"].astype(float))[0, 1]
    assert 0.69 <= r <= 0.89
    # gender and machine are independent of the numeric inputs
    male = c["gender"] == "M"
    for name in ("age", "start", "end", "mAs", "pitch"):
        x = c[name].astype(float)
        assert abs(x[male].mean() - x[~male].mean()) < 0.1 * x.std()
    assert set(c["gender"]) <= set(GENDERS) and set(c["model"]) <= {str(m) for m in MODELS}
    assert set(np.unique(c["kVp"])) <= set(KVPS)


def test_ncict_head_uses_head_filter_and_is_deterministic():
    ds = ncict_sample(300, "head", TABLES, 2)
    loop = [organ_dose(r, "brain", TABLES, "head") for r in records(ds)]
    np.testing.assert_allclose(ds.y, loop, rtol=1e-12)
    assert np.array_equal(ncict_sample(300, "head", TABLES, 2).y, ds.y)
    assert 0.5 <= ds.columns["pitch"].min() and ds.columns["pitch"].max() <= 1.3
    with pytest.raises(ModelError):
        ncict_sample(50, "head", TABLES, 0)
    with pytest.raises(ModelError):
        ncict_sample(500, "head", TABLES, 0, organ="liver")
    assert FILTERS == ("head", "body")
