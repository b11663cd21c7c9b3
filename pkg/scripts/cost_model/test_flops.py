"""Tests for the analytic FLOPs model and its report script."""

import json
import logging

import numpy as np
import pytest

from scripts.cost_model.flops import (
    CostParams,
    crossover_tokens,
    decode_flops_per_token,
    decode_reduction,
    flops_reduction,
    generation_flops,
    layer_flops,
    prefill_flops,
    quadratic_share,
    retained_tokens,
)
from scripts.cost_model.flops_report import build_parser, run

LLAVA = CostParams(n=576)
# narrow model where the n^2 term dominates at large n
NARROW = dict(d=256, m=256, layers=4)


def test_prefill_matches_integer_arithmetic():
    n, d, m, layers = 576, 4096, 11008, 32
    expected = layers * (2 * n * n * d + 4 * n * d * d + 6 * n * d * m)
    assert prefill_flops(LLAVA) == float(expected)


def test_prefill_of_empty_input_is_zero():
    assert prefill_flops(CostParams(n=0)) == 0.0


def test_quadratic_term_quadruples_with_n():
    p = CostParams(n=300, d=64, m=128)
    def quadratic(n):
        # strip the linear terms
        return layer_flops(p, n) - (p.b * p.d * p.d + p.c * p.d * p.m) * n

    assert quadratic(600) == pytest.approx(4 * quadratic(300))


def test_reduction_endpoints():
    assert flops_reduction(LLAVA, 0.0).exact == 0.0
    full = flops_reduction(LLAVA, 1.0)
    assert full.exact == 1.0 and full.retained_tokens == 0 and full.approximation == 1.0


def test_retained_tokens_match_llava_budgets():
    assert retained_tokens(LLAVA, 0.667) == 192
    assert retained_tokens(LLAVA, 0.778) == 128
    assert retained_tokens(LLAVA, 0.889) == 64
    with pytest.raises(ValueError, match="pruning ratio"):
        retained_tokens(LLAVA, 1.2)


def test_approximation_at_889_percent():
    assert flops_reduction(LLAVA, 0.889).approximation == pytest.approx(0.98768, abs=1e-5)


def test_exact_reduction_within_five_percent_for_large_n():
    for n in (2048, 4096, 8192):
        reduction = flops_reduction(CostParams(n=n, **NARROW), 0.889)
        assert abs(reduction.exact - reduction.approximation) / reduction.approximation < 0.05


def test_exact_approaches_approximation_as_n_grows():
    p = CostParams(n=2 ** 14, **NARROW)
    assert quadratic_share(p) > 0.92
    for R in np.linspace(0.0, 1.0, 21):
        reduction = flops_reduction(p, float(R))
        assert abs(reduction.exact - reduction.approximation) < 0.02
    gaps = [abs(flops_reduction(CostParams(n=n, **NARROW), 0.5).exact - 0.75)
            for n in (2 ** 10, 2 ** 12, 2 ** 14, 2 ** 16)]
    assert gaps == sorted(gaps, reverse=True)


def test_llava_shape_is_still_linear_dominated():
    assert quadratic_share(LLAVA) < 0.05
    assert crossover_tokens(LLAVA) == (4 * 4096 + 6 * 11008) / 2


def test_quadratic_share_is_half_at_crossover():
    p = CostParams(n=int(crossover_tokens(LLAVA)))
    assert quadratic_share(p) == pytest.approx(0.5)


def test_reduction_is_monotone_in_ratio():
    values = [flops_reduction(LLAVA, float(R)).exact for R in np.linspace(0.0, 1.0, 1001)]
    assert all(b >= a for a, b in zip(values, values[1:]))


def test_decode_with_empty_cache():
    assert decode_flops_per_token(LLAVA, 0) == 32 * 4 * 4096 ** 2


def test_decode_is_affine_in_cache_size():
    assert decode_flops_per_token(LLAVA, 1152) < 2 * decode_flops_per_token(LLAVA, 576)
    with pytest.raises(ValueError):
        decode_flops_per_token(LLAVA, -1)


def test_decode_reduction_approaches_ratio():
    p = CostParams(n=10 ** 6)
    for R in (0.25, 0.5, 0.889):
        assert decode_reduction(p, R) == pytest.approx(R, abs=1e-4)


def test_generation_flops_adds_decode_steps():
    n_hat = retained_tokens(LLAVA, 0.889)
    prefill = 32 * layer_flops(LLAVA, n_hat)
    assert generation_flops(LLAVA, 0.889, 0) == prefill
    expected = prefill + decode_flops_per_token(LLAVA, n_hat) + decode_flops_per_token(LLAVA, n_hat + 1)
    assert generation_flops(LLAVA, 0.889, 2) == pytest.approx(expected)


@pytest.mark.parametrize("kwargs", [{'n': -1}, {'n': 4, 'd': 0}, {'n': 4, 'layers': 0},
                                    {'n': 4, 'a': 0.0}, {'n': 4, 'c': float('nan')}])
def test_cost_params_validation(kwargs):
    with pytest.raises(ValueError):
        CostParams(**kwargs)


def _report(capsys, argv):
    args = build_parser().parse_args(argv)
    code = run(args, logging.getLogger('test_flops'))
    out = capsys.readouterr().out
    return code, (json.loads(out) if out else None)


def test_report_zero_ratio(capsys):
    code, record = _report(capsys, ['--n', '576', '--ratio', '0'])
    assert code == 0
    assert record['flops_reduction_exact'] == 0.0
    assert record['retained_tokens'] == 576


def test_report_llava_192(capsys):
    code, record = _report(capsys, ['--n', '576', '--ratio', '0.667'])
    assert code == 0 and record['retained_tokens'] == 192


def test_report_default_fields(capsys):
    code, record = _report(capsys, ['--n', '576', '--ratio', '0.889'])
    assert code == 0
    assert record['flops_reduction_approx'] == pytest.approx(0.98768, abs=1e-5)
    for field in ('flops_reduction_exact', 'prefill_flops', 'prefill_flops_pruned',
                  'decode_flops_per_token', 'decode_flops_per_token_pruned',
                  'decode_reduction', 'quadratic_share', 'crossover_tokens'):
        assert field in record
    assert record['d'] == 4096 and record['m'] == 11008 and record['layers'] == 32


@pytest.mark.parametrize("argv", [['--n', '576', '--ratio', '1.5'],
                                  ['--n', '-3', '--ratio', '0.5'],
                                  ['--n', '576', '--d', '0', '--ratio', '0.5']])
def test_report_invalid_params_exit_2(capsys, argv):
    code, record = _report(capsys, argv)
    assert code == 2 and record is None
