//! Runs the acceptance criteria and prints one line per criterion.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use condexp::algebra::TraceVector;
use condexp::bimodule::duality::{
    build_duality, check_conjugate_equations, conjugate_loop_index, expectation_from_duality, loop_index,
    standardize_with,
};
use condexp::expectation::{random_expectation, ConditionalExpectation};
use condexp::experiment::iteration_experiment;
use condexp::fixtures;
use condexp::index::{index_of, minimize_index, MINIMIZE_BUDGET};
use condexp::qsystem::{qsystem_from_pair, roundtrip_report, verify_qsystem};
use condexp::tower::{basic_construction, bidual, cross_check_dual_index, dual_expectation, gns, iterate_duals};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err(e: condexp::Error) -> String {
    e.to_string()
}

fn randoms(inc: &std::sync::Arc<condexp::inclusion::Inclusion>, count: usize, seed: u64) -> Vec<ConditionalExpectation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = TraceVector::uniform(inc.m());
    (0..count).map(|_| random_expectation(inc, &s, 1.0, &mut rng).expect("random expectation")).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * y.abs().max(1.0))
}

fn c1_index_values() -> Outcome {
    let cases: Vec<(&str, ConditionalExpectation, Vec<f64>)> = vec![
        ("F1", fixtures::trace_of(&fixtures::f1()), vec![4.0]),
        ("F2", fixtures::trace_of(&fixtures::f2()), vec![2.0]),
        ("F3 p=0.3", fixtures::f3_expectation(0.3), vec![10.0 / 3.0, 10.0 / 7.0]),
        ("F3 p=0.8", fixtures::f3_expectation(0.8), vec![1.25, 5.0]),
        ("F4", fixtures::trace_of(&fixtures::f4()), vec![10.0, 15.0]),
        ("F5", fixtures::trace_of(&fixtures::f5()), vec![1.0]),
    ];
    let mut slowest = Duration::ZERO;
    for (name, e, expected) in cases {
        let t = Instant::now();
        let ind = index_of(&e).map_err(err)?;
        slowest = slowest.max(t.elapsed());
        ensure(close(&ind.blocks, &expected, 1e-8), || format!("{name}: {:?} ≠ {expected:?}", ind.blocks))?;
    }
    ensure(slowest < Duration::from_secs(1), || format!("slowest {slowest:?}"))?;
    Ok(format!("all values within 1e-8, slowest {slowest:.1?}"))
}

fn c2_dual_index_law() -> Outcome {
    let mut worst: f64 = 0.0;
    for (k, inc) in fixtures::all().into_iter().take(4).enumerate() {
        for e in randoms(&inc, 20, 200 + k as u64) {
            let dual = dual_expectation(&basic_construction(&gns(&e).map_err(err)?).map_err(err)?).map_err(err)?;
            worst = worst.max(cross_check_dual_index(&dual).map_err(err)?.residual);
        }
    }
    ensure(worst <= 1e-8, || format!("residual {worst:.3e}"))?;
    Ok(format!("80 expectations, worst residual {worst:.2e}"))
}

fn c3_bidual() -> Outcome {
    let e = fixtures::f3_expectation(0.3);
    let e2 = bidual(&e).map_err(err)?;
    let avg = fixtures::trace_of(&fixtures::f3());
    let moved = e2.distance(&e);
    let to_avg = e2.distance(&avg);
    ensure(moved > 1e-3, || format!("F3 bidual equals E (distance {moved:.3e})"))?;
    ensure(to_avg <= 1e-9, || format!("F3 bidual differs from averaging by {to_avg:.3e}"))?;
    let mut worst: f64 = 0.0;
    for e in randoms(&fixtures::f1(), 20, 300) {
        worst = worst.max(bidual(&e).map_err(err)?.distance(&e));
    }
    ensure(worst <= 1e-9, || format!("F1 bidual moved by {worst:.3e}"))?;
    Ok(format!("F3 E″ = averaging ({to_avg:.1e}), F1 E″ = E ({worst:.1e})"))
}

fn c4_iterated_duals() -> Outcome {
    let cases = [
        ("F3", fixtures::f3_expectation(0.3), vec![vec![10.0 / 3.0, 10.0 / 7.0], vec![2.0], vec![2.0, 2.0], vec![2.0]], 2.0),
        ("F4", fixtures::trace_of(&fixtures::f4()), vec![vec![10.0, 15.0], vec![13.0], vec![13.0, 13.0], vec![13.0]], 13.0),
    ];
    for (name, e, expected, limit) in cases {
        let t = Instant::now();
        let rep = iterate_duals(&e, 200, 1e-10).map_err(err)?;
        let elapsed = t.elapsed();
        let got: Vec<Vec<f64>> = rep.sequence.iter().map(|s| s.values.clone()).collect();
        ensure(got.len() >= expected.len(), || format!("{name}: sequence too short {got:?}"))?;
        for (g, x) in got.iter().zip(&expected) {
            ensure(close(g, x, 1e-10), || format!("{name}: {got:?}"))?;
        }
        ensure(rep.converged && rep.limit.is_some_and(|l| (l - limit).abs() <= 1e-10), || {
            format!("{name}: limit {:?}", rep.limit)
        })?;
        ensure(elapsed < Duration::from_secs(1), || format!("{name}: {elapsed:?}"))?;
    }
    Ok("F3 → [E] = 2, F4 → [E] = 13".into())
}

fn c5_minimize() -> Outcome {
    let mut notes = Vec::new();
    for (name, inc, target) in [
        ("F1", fixtures::f1(), 4.0),
        ("F2", fixtures::f2(), 2.0),
        ("F3", fixtures::f3(), 2.0),
        ("F4", fixtures::f4(), 13.0),
    ] {
        let t = Instant::now();
        let min = minimize_index(&inc, &TraceVector::uniform(inc.m())).map_err(err)?;
        let elapsed = t.elapsed();
        let gap = min.index.gap();
        ensure((min.ind0 - target).abs() <= 1e-4 * target, || format!("{name}: ind₀ = {}", min.ind0))?;
        ensure(gap <= 1e-4 * min.ind0, || format!("{name}: gap {gap:.3e}"))?;
        ensure(min.evaluations <= MINIMIZE_BUDGET, || format!("{name}: {} evaluations", min.evaluations))?;
        ensure(elapsed < Duration::from_secs(10), || format!("{name}: {elapsed:?}"))?;
        notes.push(format!("{name} {:.6} ({} evals, {elapsed:.1?})", min.ind0, min.evaluations));
    }
    Ok(notes.join(", "))
}

fn all_with_randoms(seed: u64) -> Vec<(String, ConditionalExpectation)> {
    let mut out = Vec::new();
    for (k, inc) in fixtures::all().into_iter().enumerate() {
        out.push((format!("F{}", k + 1), fixtures::trace_of(&inc)));
        for (j, e) in randoms(&inc, 20, seed + k as u64).into_iter().enumerate() {
            out.push((format!("F{} random {j}", k + 1), e));
        }
    }
    out
}

fn c6_conjugate_equations() -> Outcome {
    let (mut res, mut rt): (f64, f64) = (0.0, 0.0);
    let cases = all_with_randoms(600);
    for (name, e) in &cases {
        let pair = build_duality(e).map_err(|x| format!("{name}: {x}"))?;
        res = res.max(check_conjugate_equations(&pair).map_err(err)?.max());
        rt = rt.max(expectation_from_duality(&pair).map_err(err)?.distance(e));
    }
    ensure(res <= 1e-9 && rt <= 1e-9, || format!("residual {res:.3e}, round trip {rt:.3e}"))?;
    Ok(format!("{} expectations, residual {res:.1e}, round trip {rt:.1e}", cases.len()))
}

fn c7_loops() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut worst: f64 = 0.0;
    let cases = all_with_randoms(700);
    for (name, e) in cases.iter().step_by(3) {
        let ind = index_of(e).map_err(err)?;
        let pair = build_duality(e).map_err(err)?;
        let base = loop_index(&pair).map_err(err)?.real_values();
        worst = worst.max(rel(&base, &ind.blocks));
        for _ in 0..10 {
            let s: f64 = rand::Rng::random_range(&mut rng, 0.2..5.0);
            let scaled = loop_index(&pair.rescale(s)).map_err(err)?.real_values();
            worst = worst.max(rel(&scaled, &ind.blocks));
        }
        let expected = e.to_n(&e.apply(&ind.to_element())).map_err(err)?;
        let conj = conjugate_loop_index(&pair).map_err(err)?;
        let d = conj.to_element().sub(&expected).norm() / expected.norm().max(1.0);
        worst = worst.max(d);
        ensure(worst <= 1e-8, || format!("{name}: deviation {worst:.3e}"))?;
    }
    Ok(format!("loop values and 10 rescalings each, worst {worst:.1e}"))
}

fn rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs().max(1.0)).fold(0.0, f64::max)
}

fn c8_standard() -> Outcome {
    let mut notes = Vec::new();
    for (name, inc) in [("F1", fixtures::f1()), ("F4", fixtures::f4())] {
        let min = minimize_index(&inc, &TraceVector::uniform(inc.m())).map_err(err)?;
        let pair = build_duality(&min.expectation).map_err(err)?;
        let (_, rep) = standardize_with(&pair, min.ind0).map_err(err)?;
        ensure(rep.standard && rep.balance_residual <= 1e-6 && rep.product_residual <= 1e-6, || {
            format!("{name}: {rep:?}")
        })?;
        notes.push(format!("{name} r*r = {:.6}", rep.r_norm[0]));
    }
    Ok(notes.join(", "))
}

fn c9_qsystems() -> Outcome {
    let t = Instant::now();
    let (mut axioms, mut margin) = (0.0f64, f64::INFINITY);
    let mut count = 0;
    for (k, inc) in fixtures::all().into_iter().enumerate().take(4) {
        let mut es = vec![fixtures::trace_of(&inc)];
        es.extend(randoms(&inc, 3, 900 + k as u64));
        for (j, e) in es.iter().enumerate() {
            let q = qsystem_from_pair(&build_duality(e).map_err(err)?).map_err(err)?;
            let rep = verify_qsystem(&q).map_err(err)?;
            axioms = axioms.max(rep.max_residual());
            margin = margin.min(rep.invertibility_margin);
            let rt = roundtrip_report(e, j as u64).map_err(err)?;
            ensure(rt.ok, || format!("F{} #{j}: {:?}", k + 1, rt.mismatches))?;
            ensure(rt.lambda_hat == rt.lambda && rt.index_residual <= 1e-8, || format!("F{} #{j}: {rt:?}", k + 1))?;
            count += 1;
        }
    }
    let elapsed = t.elapsed();
    ensure(axioms <= 1e-9, || format!("axiom residual {axioms:.3e}"))?;
    ensure(margin >= 1.0 - 1e-9, || format!("margin {margin}"))?;
    ensure(elapsed < Duration::from_secs(30), || format!("{elapsed:?}"))?;
    Ok(format!("{count} Q-systems, axioms {axioms:.1e}, margin {margin:.6}, {elapsed:.1?}"))
}

fn c10_properties() -> Outcome {
    let mut notes = Vec::new();
    for (name, prop) in common::PROPERTIES {
        let t = Instant::now();
        let mut runner = TestRunner::new(common::config());
        let strategy = (0..common::inclusions().len(), proptest::num::u64::ANY);
        for _ in 0..common::CASES {
            let (k, seed) = strategy.new_tree(&mut runner).map_err(|e| e.to_string())?.current();
            prop(k, seed).map_err(|e| format!("{name} (k = {k}, seed = {seed}): {e}"))?;
        }
        notes.push(format!("{name} {:.1?}", t.elapsed()));
    }
    Ok(format!("{} cases each: {}", common::CASES, notes.join(", ")))
}

fn c11_open_question() -> Outcome {
    let f4 = fixtures::f4();
    let rep = iteration_experiment(&f4, &TraceVector::uniform(f4.m()), 100, 11, 200, 1e-10).map_err(err)?;
    ensure(rep.parity_residual <= 1e-8, || format!("parity residual {:.3e}", rep.parity_residual))?;
    for run in &rep.runs {
        if let Some(l) = run.limit {
            ensure(l >= 1.0 - 1e-9 && l <= run.sup_norm + 1e-9, || format!("limit {l} outside [1, {}]", run.sup_norm))?;
        }
    }
    ensure(rep.non_monotone >= 1, || "no non-monotone sequence observed".into())?;
    Ok(format!(
        "convergence fraction {:.2}, {} of {} sequences non-monotone, limits in [{:.4}, {:.4}]",
        rep.convergence_fraction,
        rep.non_monotone,
        rep.samples,
        rep.limit_min.unwrap_or(f64::NAN),
        rep.limit_max.unwrap_or(f64::NAN)
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("index values", c1_index_values),
        ("dual-index law", c2_dual_index_law),
        ("bidual criterion", c3_bidual),
        ("iterated duals", c4_iterated_duals),
        ("minimal expectation", c5_minimize),
        ("conjugate equations", c6_conjugate_equations),
        ("loop formulas", c7_loops),
        ("standard solutions", c8_standard),
        ("Q-system suite", c9_qsystems),
        ("property suites", c10_properties),
        ("open-question experiment", c11_open_question),
    ];
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {tag} {name}: {detail} [{:.1?}]", n + 1, t.elapsed());
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
