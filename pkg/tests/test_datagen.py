import numpy as np
import pytest

from errors import InvalidInputError
from models import Dataset, load_vector_csv
from services.datagen import (BetaPrior, SyntheticSpec, derive_seed, figure1_spec, generate,
                              generate_test, save_synthetic, stream)


def test_generation_is_deterministic():
    spec = SyntheticSpec(n=30, p=10, seed=42)
    (a, beta_a, noise_a), (b, beta_b, noise_b) = generate(spec), generate(spec)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(beta_a, beta_b)
    np.testing.assert_array_equal(noise_a, noise_b)


def test_response_model():
    data, beta_star, noise = generate(SyntheticSpec(n=30, p=10, seed=1))
    np.testing.assert_allclose(data.y, data.X @ beta_star + noise)


def test_design_does_not_depend_on_prior_or_noise():
    plain, _, _ = generate(SyntheticSpec(n=30, p=10, seed=5))
    other, beta, _ = generate(SyntheticSpec(n=30, p=10, beta_prior=BetaPrior.CONSTANT,
                                            prior_param=2.0, noise_sd=0.0, seed=5))
    np.testing.assert_array_equal(plain.X, other.X)
    np.testing.assert_array_equal(beta, np.full(10, 2.0))
    np.testing.assert_allclose(other.y, other.X @ beta)


def test_design_scaling():
    data, _, _ = generate(SyntheticSpec(n=400, p=200, seed=0))
    assert np.var(data.X) * 400 == pytest.approx(1.0, rel=0.05)


def test_figure1_spec():
    spec = figure1_spec(seed=3)
    assert (spec.n, spec.p, spec.prior_param, spec.noise_sd) == (1500, 1200, 4.0, 1.0)
    assert spec.delta == pytest.approx(1.25)


def test_resized_keeps_the_rest():
    spec = SyntheticSpec(n=30, p=10, noise_sd=0.5, seed=2).resized(60, 20)
    assert (spec.n, spec.p, spec.noise_sd, spec.seed) == (60, 20, 0.5, 2)
    assert spec.resized(60, 20, seed=9).seed == 9


@pytest.mark.parametrize('kwargs', [
    dict(n=1, p=3),
    dict(n=10, p=0),
    dict(n=10, p=3, prior_param=0.0),
    dict(n=10, p=3, noise_sd=-1.0),
    dict(n=10, p=3, seed=-1),
])
def test_spec_validation(kwargs):
    with pytest.raises(InvalidInputError):
        SyntheticSpec(**kwargs)


def test_test_draws():
    spec = SyntheticSpec(n=50, p=5, noise_sd=1.0, seed=0)
    X_new, y_new = generate_test(spec, np.zeros(5), m=100_000, seed=4)
    assert X_new.shape == (100_000, 5)
    assert np.var(y_new) == pytest.approx(1.0, rel=0.1)
    again, _ = generate_test(spec, np.zeros(5), m=10, seed=4, index=1)
    assert not np.array_equal(again, X_new[:10])
    with pytest.raises(InvalidInputError):
        generate_test(spec, np.zeros(4), m=10, seed=0)
    with pytest.raises(InvalidInputError):
        generate_test(spec, np.zeros(5), m=0, seed=0)


def test_streams_and_derived_seeds():
    assert stream(1, 'design').random() == stream(1, 'design').random()
    assert stream(1, 'design').random() != stream(1, 'beta').random()
    assert derive_seed(7, 'figure1', 0) == derive_seed(7, 'figure1', 0)
    assert derive_seed(7, 'figure1', 0) != derive_seed(7, 'figure1', 1)
    assert derive_seed(7, 'figure1', 0) != derive_seed(7, 'rates', 0)
    with pytest.raises(InvalidInputError):
        derive_seed(-1, 'figure1')


def test_save_synthetic(tmp_path):
    data, beta_star, _ = generate(SyntheticSpec(n=20, p=4, seed=0))
    data_path, beta_path = save_synthetic(data, beta_star, tmp_path / 'set', '# seed 0')
    loaded = Dataset.from_csv(data_path)
    np.testing.assert_array_equal(loaded.X, data.X)
    np.testing.assert_array_equal(load_vector_csv(beta_path), beta_star)
