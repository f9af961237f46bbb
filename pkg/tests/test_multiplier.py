import math

import numpy as np
import pytest

from sipmlab.multiplier import (DomainError, MultiplierSymbol, PnSequence, SequenceError,
                                SipmParams, check_solver_ready, pn_from_symbol, sipm_pn,
                                sipm_symbol, validate_symbol)


def test_sipm_pn_hand_values():
    assert sipm_pn(SipmParams(1.0, 1, 1), 1) == pytest.approx(2 * math.sqrt(2), rel=1e-15)
    assert sipm_pn(SipmParams(2.0, 1, 1), 7) == 2.0


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5])
def test_sipm_pn_increasing(beta):
    p = PnSequence.sipm(SipmParams(beta, 2, 3)).values(50)
    assert np.all(np.diff(p) > 0)


def test_sipm_params_domain():
    with pytest.raises(DomainError):
        SipmParams(0.0)
    with pytest.raises(DomainError):
        SipmParams(2.5)
    with pytest.raises(DomainError):
        SipmParams(1.0, a=0)
    with pytest.raises(DomainError):
        SipmParams(1.0, k=1.5)


def test_symbol_agrees_with_closed_form():
    sym = sipm_symbol(1.0)
    assert pn_from_symbol(sym, 1, 1, 1) == pytest.approx(2 * math.sqrt(2), rel=1e-14)
    seq = PnSequence.from_symbol(sipm_symbol(1.3), 2, 3)
    ref = PnSequence.sipm(SipmParams(1.3, 2, 3))
    np.testing.assert_allclose(seq.values(40), ref.values(40), rtol=1e-13)


def test_constant_symbol_and_zero_guard():
    one = MultiplierSymbol(2, lambda k: np.array([0.0, 1.0]))
    assert pn_from_symbol(one, 2, 5, 9) == 1.0
    zero = MultiplierSymbol(2, lambda k: np.zeros(2))
    with pytest.raises(DomainError):
        pn_from_symbol(zero, 1, 1, 1)


def test_symbol_shape_check():
    with pytest.raises(DomainError):
        sipm_symbol(1.0)([1, 2, 3])
    with pytest.raises(DomainError):
        MultiplierSymbol(1, lambda k: k)


def test_validate_sipm_passes():
    rep = validate_symbol(sipm_symbol(1.0), 1, ((1, 64),), (1, 64))
    assert rep.all_passed and rep.gates_eigensolver
    assert 0 <= rep.r0 <= 1.5


def test_validate_pm1_witness():
    def ev(k):
        return np.array([0.0, 1.0 + abs(k[0]) / (1.0 + abs(k[1]))])
    rep = validate_symbol(MultiplierSymbol(2, ev), 1, ((1, 8),), (1, 8))
    assert not rep.passed["PM1"]
    assert rep.witnesses["PM1"][0][0] == (0, 1)


def test_validate_pm2_odd_symbol():
    def ev(k):
        r2 = float(k @ k)
        return np.zeros(2) if r2 == 0 else np.array([0.0, k[0] ** 3 / r2 ** 1.5 * (1 + 0 * k[1])])
    rep = validate_symbol(MultiplierSymbol(2, ev), 1, ((1, 8),), (1, 8))
    assert not rep.passed["PM2"]


def test_validate_beta2_is_not_decaying():
    # m_d = k1^2 / |k|^0 does not decay in n, so the eigensolver gate closes
    rep = validate_symbol(sipm_symbol(2.0), 1, ((1, 8),), (1, 8))
    assert not rep.gates_eigensolver


def test_from_values_and_table(tmp_path):
    path = tmp_path / "p.csv"
    path.write_text("n,p\n1,1\n2,4\n3,9\n")
    seq = PnSequence.from_table(path)
    np.testing.assert_array_equal(seq.values(3), [1, 4, 9])
    with pytest.raises(SequenceError):
        seq.values(4)
    bad = tmp_path / "gap.txt"
    bad.write_text("1 1\n3 2\n")
    with pytest.raises(SequenceError):
        PnSequence.from_table(bad)
    with pytest.raises(SequenceError):
        PnSequence.from_values([1.0, -2.0])


def test_values_cache_is_read_only():
    seq = PnSequence.sipm(SipmParams(1.0))
    v = seq.values(10)
    with pytest.raises(ValueError):
        v[0] = 0.0
    np.testing.assert_array_equal(seq.values(1000)[:10], v)


def test_check_solver_ready():
    p = check_solver_ready(PnSequence.sipm(SipmParams(1.0)), 200)
    assert p.size == 200
    with pytest.raises(SequenceError, match="not unbounded"):
        check_solver_ready(PnSequence.from_values(np.full(100, 2.0)), 100)
    with pytest.raises(SequenceError, match="not increasing"):
        vals = np.arange(1.0, 101.0) ** 2
        vals[5] = vals[4]
        check_solver_ready(PnSequence.from_values(vals), 100)
