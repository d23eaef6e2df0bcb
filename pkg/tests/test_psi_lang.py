import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvatura.psi_lang import (BinOp, Call, EvalError, ExprError, FUNCTIONS, Neg, Num, ParseError,
                                ProblemSpec, Var, check_hypotheses, diff_rho, eval_drho, evaluate,
                                homotopy_psibar, parse, to_source)
from curvatura.sphere_grid import build_grid

NORTH = (0.0, 0.0, 1.0)

CORPUS = [
    "rho", "x", "y", "z", "1", "2.5", "1e-3", "-rho", "--rho", "rho^2", "rho^2^3", "(rho^2)^3",
    "-rho^2", "(-rho)^2", "2^-rho", "rho*x+y", "rho*(x+y)", "rho-x-y", "rho-(x-y)", "rho/x/2",
    "rho/(x/2)", "1/rho^2", "cosh(1)^2/sinh(rho)^2", "coth(rho)^2", "coth(rho)^(1+1)",
    "exp(-rho)*cos(x)", "log(rho)+sqrt(rho)", "abs(x-0.5)*rho", "tanh(rho)*sinh(rho)",
    "sin(x)^2+cos(x)^2", "cosh(1)^2*(1+0.05*z)/sinh(rho)^2", "2*x*y*z + rho",
    "sqrt(1+x^2)/rho", "exp(log(rho))", "((rho))", "-(x+y)", "-(x*y)", "x*-y", "x--y",
    "1.5e2*rho", "rho^0.5", "rho^-1", "cosh(rho)^2-sinh(rho)^2", "coth(2*rho)",
    "sinh(rho)/(1+cosh(rho))", "abs(-rho)", "exp(x+y+z)/exp(rho)", "(x+1)*(y+1)*(z+1)",
    "rho^(x+2)", "1/(1+rho^2)", "-1/rho", "3-2-1", "3-(2-1)", "2*3/4", "2/(3*4)",
]


def test_corpus_size():
    assert len(CORPUS) >= 50


@pytest.mark.parametrize("src", CORPUS)
def test_round_trip_fixed_point(src):
    printed = to_source(parse(src))
    assert to_source(parse(printed)) == printed
    assert parse(printed) == parse(src)


@pytest.mark.parametrize("src", CORPUS)
def test_round_trip_preserves_value(src):
    u = (0.3, 0.4, math.sqrt(1 - 0.25))
    try:
        a = evaluate(parse(src), u, 1.3)
    except EvalError:
        return
    np.testing.assert_allclose(evaluate(parse(to_source(parse(src))), u, 1.3), a, rtol=1e-15)


ast = st.recursive(
    st.one_of(st.sampled_from([Var(v) for v in ("rho", "x", "y", "z")]),
              st.floats(0, 100, allow_nan=False).map(Num)),
    lambda kids: st.one_of(
        kids.map(Neg),
        st.tuples(st.sampled_from(FUNCTIONS), kids).map(lambda t: Call(*t)),
        st.tuples(st.sampled_from("+-*/^"), kids, kids).map(lambda t: BinOp(*t))),
    max_leaves=12)


@given(ast)
def test_random_tree_round_trip(tree):
    printed = to_source(tree)
    assert parse(printed) == tree
    assert to_source(parse(printed)) == printed


def test_parse_structure():
    assert parse("coth(rho)^2") == BinOp("^", Call("coth", Var("rho")), Num(2.0))
    assert parse("-rho^2") == Neg(BinOp("^", Var("rho"), Num(2.0)))
    assert parse("2^3^2") == BinOp("^", Num(2.0), BinOp("^", Num(3.0), Num(2.0)))
    assert parse("  rho *  x ") == parse("rho*x")


def test_evaluate_constant():
    assert evaluate("cosh(1)", NORTH, 1.0) == math.cosh(1)


def test_parse_errors():
    with pytest.raises(ParseError) as err:
        parse("coth(")
    assert err.value.position == 5
    with pytest.raises(ParseError) as err:
        parse("rho # 2")
    assert err.value.position == 4
    with pytest.raises(ParseError):
        parse("foo(rho)")
    with pytest.raises(ParseError):
        parse("w + 1")
    with pytest.raises(ParseError):
        parse("rho rho")
    with pytest.raises(ParseError):
        parse("")


def test_evaluate_examples(rng):
    assert evaluate("rho", NORTH, 1.5) == 1.5
    v = rng.normal(size=(3, 200))
    v /= np.linalg.norm(v, axis=0)
    np.testing.assert_allclose(evaluate("x^2+y^2+z^2", tuple(v), 1.0), 1.0, atol=1e-12)
    assert evaluate("cosh(rho)^2/sinh(rho)^2", NORTH, 1.0) == pytest.approx(1 / math.tanh(1) ** 2, rel=1e-15)


@pytest.mark.parametrize("src,rho", [("log(rho-2)", 1.0), ("1/(rho-1)", 1.0), ("coth(rho-1)", 1.0),
                                     ("sqrt(1-rho)", 2.0), ("exp(exp(rho))", 10.0)])
def test_evaluate_errors(src, rho):
    with pytest.raises(EvalError) as err:
        evaluate(src, NORTH, rho)
    assert err.value.path.startswith("root")


def test_evaluate_domain_checks():
    with pytest.raises(ExprError):
        evaluate("rho", NORTH, 0.0)
    with pytest.raises(ExprError):
        evaluate("rho", (1.0, 1.0, 0.0), 1.0)


def test_drho_examples():
    assert eval_drho(parse("rho^2"), NORTH, 3.0) == pytest.approx(6.0, rel=1e-15)
    assert eval_drho(parse("coth(rho)"), NORTH, 0.7) == pytest.approx(-1 / math.sinh(0.7) ** 2, rel=1e-14)
    assert eval_drho(parse("x*rho"), (0.5, 0.0, math.sqrt(0.75)), 2.0) == pytest.approx(0.5, rel=1e-15)
    assert diff_rho(parse("x*y+3")) == Num(0.0)


SMOOTH = ["rho^2", "coth(rho)", "cosh(1)^2/sinh(rho)^2", "exp(-rho)*cos(x)", "log(rho)*sqrt(rho)",
          "tanh(rho)*sinh(rho)", "rho^x", "2^rho", "sin(rho*z)", "abs(rho-5)", "1/(1+rho^2)",
          "rho^(x+2)/(1+y^2)", "cosh(rho)^2-sinh(rho)^2", "coth(2*rho)^3", "sqrt(1+rho^2)*exp(x*rho)",
          "-rho/(2+z)", "(1+0.05*z)*cosh(1)^2/sinh(rho)^2", "log(cosh(rho))", "exp(sin(rho))",
          "rho^-1.5"]


def test_drho_against_central_differences(rng):
    h = 1e-5
    count = 0
    for src in SMOOTH:
        node = parse(src)
        for _ in range(50):
            v = rng.normal(size=3)
            u = tuple(v / np.linalg.norm(v))
            rho = rng.uniform(0.5, 2.0)
            ref = (evaluate(node, u, rho + h) - evaluate(node, u, rho - h)) / (2 * h)
            got = eval_drho(node, u, rho)
            assert abs(got - ref) <= 1e-6 * max(abs(ref), 1.0), (src, rho)
            count += 1
    assert count >= 1000


# ---- problem spec and homotopy

def test_problem_spec_validation():
    spec = ProblemSpec(2, 0.5, 2.0, 1.0, "cosh(1)^2/sinh(rho)^2")
    assert abs(spec.A / math.tanh(1.0) - 1) < 1e-15
    assert abs(spec.A * (1 / math.tanh(spec.Rbar)) - 1) <= 1e-14
    assert spec.source == "cosh(1)^2/sinh(rho)^2"
    for bad in [dict(k=3), dict(R1=1.5), dict(Rbar=2.5), dict(epsilon=0.0)]:
        kw = dict(k=2, R1=0.5, R2=2.0, Rbar=1.0, psi="rho", epsilon=1.0)
        kw.update(bad)
        with pytest.raises(ValueError):
            ProblemSpec(**kw)
    with pytest.raises(ParseError):
        ProblemSpec(2, 0.5, 2.0, 1.0, "coth(")


@pytest.mark.parametrize("eps", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("Rbar", [0.6, 1.0, 1.7])
def test_homotopy_endpoints(eps, Rbar, rng):
    spec = ProblemSpec(2, 0.5, 2.0, Rbar, "cosh(1)^2*(1+0.05*z)/sinh(rho)^2", eps)
    v = rng.normal(size=(3, 50))
    u = tuple(v / np.linalg.norm(v, axis=0))
    rho = rng.uniform(0.5, 2.0, 50)
    np.testing.assert_allclose(homotopy_psibar(spec, 1.0, u, rho), np.sqrt(spec.psi_at(u, rho)), rtol=1e-13)
    assert homotopy_psibar(spec, 0.0, NORTH, Rbar) == pytest.approx(1 / math.tanh(Rbar), rel=1e-13)
    above = np.linspace(Rbar + 0.01, 3.0, 20)
    assert np.all(homotopy_psibar(spec, 0.0, NORTH, above) < 1 / np.tanh(above))
    mid = homotopy_psibar(spec, 0.3, u, rho)
    np.testing.assert_allclose(mid, 0.3 * np.sqrt(spec.psi_at(u, rho))
                               + 0.7 * np.tanh(Rbar) ** eps / np.tanh(rho) ** (1 + eps), rtol=1e-13)


def test_homotopy_rejects_bad_t():
    spec = ProblemSpec(1, 0.5, 2.0, 1.0, "coth(rho)")
    with pytest.raises(ValueError):
        homotopy_psibar(spec, 1.5, NORTH, 1.0)


# ---- hypotheses

GRID = build_grid(16, 32)


def test_hypotheses_radial_family():
    for k in (1, 2):
        spec = ProblemSpec(k, 0.5, 2.0, 1.0, f"cosh(1)^{k}/sinh(rho)^{k}")
        rep = check_hypotheses(spec, GRID)
        assert rep.passed and abs(rep.monotonicity_margin) <= 1e-12
        assert rep.inner_margin > 0 and rep.outer_margin > 0
        assert rep.kind == "sampled certificate"


def test_hypotheses_coth_fails_monotonicity():
    rep = check_hypotheses(ProblemSpec(2, 0.5, 2.0, 1.0, "coth(rho)^2"), GRID)
    assert not rep.passed
    assert {v["condition"] for v in rep.violations} == {"monotonicity"}
    # d/drho cosh^2 = 2 cosh sinh, largest at R2
    assert rep.monotonicity_margin == pytest.approx(2 * math.cosh(2.0) * math.sinh(2.0), rel=1e-12)


def test_hypotheses_perturbed_passes():
    rep = check_hypotheses(ProblemSpec(2, 0.5, 2.0, 1.0, "cosh(1)^2*(1+0.05*z)/sinh(rho)^2"), GRID)
    assert rep.passed
    # margins against the checker's own closed forms
    ref_in = math.cosh(1) ** 2 * (1 - 0.05 * math.cos(GRID.theta[0])) / math.sinh(0.5) ** 2 - 1 / math.tanh(0.5) ** 2
    assert rep.inner_margin == pytest.approx(ref_in, rel=1e-12)


def test_hypotheses_scaled_barrier_fails():
    rep = check_hypotheses(ProblemSpec(2, 0.5, 2.0, 1.0, "0.5*cosh(1)^2/sinh(rho)^2"), GRID)
    assert not rep.passed
    assert rep.inner_margin < 0 and rep.violations[0]["condition"] == "barrier_inner"
    assert set(rep.inner_worst) >= {"theta", "phi", "node", "rho"}
    assert "barrier_inner" in rep.to_dict()


def test_positivity_between_samples():
    rhos = np.linspace(0.5, 2.0, 32)
    m = float(0.5 * (rhos[10] + rhos[11]))
    spec = ProblemSpec(1, 0.5, 2.0, 1.0, f"(rho-{m!r})^2")
    rep = check_hypotheses(spec, GRID)
    assert any(w["condition"] == "positivity_between_samples" for w in rep.warnings)
    strict = check_hypotheses(spec, GRID, strict_positivity=True)
    assert any(v["condition"] == "positivity_between_samples" for v in strict.violations)


def test_n_rho_minimum():
    with pytest.raises(ValueError):
        check_hypotheses(ProblemSpec(1, 0.5, 2.0, 1.0, "coth(rho)"), GRID, n_rho=8)
