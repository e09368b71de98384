import numpy as np
import pytest
from scipy.integrate import quad

from coherent_hartree.amplitudes import AmplitudeError, GaussianProfile, HeavyTailProfile, build_amplitude


def mass(profile):
    return quad(lambda s: abs(profile(np.array([[s]]))[0]) ** 2, -np.inf, np.inf, limit=200)[0]


@pytest.mark.parametrize("profile", [GaussianProfile(), GaussianProfile(width=0.7, center=0.4, momentum=2.0),
                                     HeavyTailProfile(2.75), HeavyTailProfile(4.0, momentum=1.0)])
def test_profiles_have_unit_mass(profile):
    assert mass(profile) == pytest.approx(1.0, abs=1e-9)


def test_scale_and_momentum():
    base = GaussianProfile()
    shifted = GaussianProfile(momentum=1.0, scale=2.0)
    y = np.linspace(-3, 3, 13)[:, None]
    assert np.allclose(shifted(y), 2.0 * base(y) * np.exp(1j * y[:, 0]))
    assert shifted.mass() == pytest.approx(4.0)


def test_two_dimensional_gaussian_factorises():
    y = np.array([[0.3, -0.5]])
    one = GaussianProfile()
    assert GaussianProfile()(y)[0] == pytest.approx(one(y[:, :1])[0] * one(y[:, 1:])[0])


def test_builder_and_errors():
    profile = build_amplitude({"kind": "gaussian", "width": 2.0, "scale": [0.0, 1.0]})
    assert profile.scale == 1j and profile.width == 2.0
    assert build_amplitude({"kind": "heavy_tail", "exponent": 3.0}).describe()["exponent"] == 3.0
    with pytest.raises(AmplitudeError):
        build_amplitude({"kind": "triangle"})
    with pytest.raises(AmplitudeError):
        build_amplitude({"kind": "gaussian", "height": 1.0})
    with pytest.raises(AmplitudeError):
        GaussianProfile(width=0.0)
    with pytest.raises(AmplitudeError):
        HeavyTailProfile(0.4)(np.zeros((1, 1)))
