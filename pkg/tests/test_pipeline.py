from conftest import copies
from peakshape.align import AlignConfig
from peakshape.pipeline import estimate_at, estimate_shape, initial_template


def test_estimate_shape_on_identical_curves(bimodal, short_ppd, fast_fit):
    est = estimate_shape(copies(bimodal, 4), AlignConfig(), short_ppd, fast_fit)
    assert (est.m, est.lambda_star) == (2, 0.0)
    assert est.alignment is est.ppd.alignment_star
    assert est.template.m == 2
    assert est.fit.objective_final <= est.fit.objective_init
    assert est.g_hat is est.fit.estimate


def test_estimate_at_aligns_when_needed(bimodal, short_ppd, fast_fit):
    est = estimate_at(copies(bimodal, 3), 0.05, 2, AlignConfig(), short_ppd, fast_fit)
    assert est.alignment.lam == 0.05
    assert est.ppd is None


def test_initial_template_keeps_strongest_peaks(bimodal):
    assert initial_template(bimodal, 1, 0.03).m == 1
    assert initial_template(bimodal, 2, 0.03).m == 2
