//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use levelling_core::bolts::{
    best_lower_bound, bolt_functional, bolt_functional_norm, certified_value, enumerate_bolts,
    enumerate_closed_bolts, max_irreducible_bolt_length, Bolt, LowerBoundBudget,
};
use levelling_core::diagnostics::{cproperty_jump, multi_factor_gap, multifactor_search};
use levelling_core::domain::generate_domain;
use levelling_core::expr::Expr;
use levelling_core::levelling::{central_symmetry_gap, lift, proximity_op, run_levelling};
use levelling_core::oracle::{lp_exact_error, verify_certificate, OracleResult};
use levelling_core::{Domain, FactorFunction, Field, LevellingState, Region, StoppingRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

struct Instance {
    d: Domain,
    h: Field,
    st: LevellingState,
    lp: OracleResult,
}

fn grid(sizes: &[usize]) -> Domain {
    generate_domain(&Region::ProductGrid(sizes.to_vec()), 1).unwrap()
}

fn unit_square() -> Region {
    Region::Rectangle {
        x0: 0.0,
        x1: 1.0,
        y0: 0.0,
        y1: 1.0,
    }
}

fn uniform_field(d: &Domain, rng: &mut ChaCha8Rng) -> Field {
    Field((0..d.num_points()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
}

/// Two random factors on up to `max_points` points with up to `max_classes`
/// classes each.
fn random_domain(rng: &mut ChaCha8Rng, max_points: usize, max_classes: usize) -> Domain {
    let n = rng.gen_range(1..=max_points);
    let k0 = rng.gen_range(1..=max_classes);
    let k1 = rng.gen_range(1..=max_classes);
    let f0 = (0..n).map(|_| rng.gen_range(0..k0)).collect();
    let f1 = (0..n).map(|_| rng.gen_range(0..k1)).collect();
    Domain::from_factors(None, vec![f0, f1]).unwrap()
}

fn random_factor_function(d: &Domain, factor: usize, rng: &mut ChaCha8Rng) -> FactorFunction {
    FactorFunction {
        factor,
        values: (0..d.class_counts()[factor])
            .map(|_| rng.gen_range(-2.0..=2.0))
            .collect(),
    }
}

/// `(1/m) Σ (−1)^i h(x_i)`, computed directly from the point sequence.
fn direct_functional(b: &Bolt, h: &Field) -> f64 {
    let m = b.points.len() as f64;
    b.points
        .iter()
        .enumerate()
        .map(|(i, &x)| if i % 2 == 0 { h.0[x] } else { -h.0[x] })
        .sum::<f64>()
        / m
}

fn direct_norm(b: &Bolt) -> f64 {
    let mut net: BTreeMap<usize, i64> = BTreeMap::new();
    for (i, &x) in b.points.iter().enumerate() {
        *net.entry(x).or_default() += if i % 2 == 0 { 1 } else { -1 };
    }
    net.values().map(|v| v.unsigned_abs()).sum::<u64>() as f64 / b.points.len() as f64
}

fn direct_disjoint(b: &Bolt) -> bool {
    let even: Vec<usize> = b.points.iter().step_by(2).copied().collect();
    b.points.iter().skip(1).step_by(2).all(|x| !even.contains(x))
}

fn criterion_1(instances: &mut Vec<Instance>) -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut largest = 0;
    for k in 0..50 {
        let (nx, ny) = if k == 0 {
            (30, 30)
        } else {
            (rng.gen_range(2..=30), rng.gen_range(2..=30))
        };
        let d = grid(&[nx, ny]);
        let h = uniform_field(&d, &mut rng);
        let st = run_levelling(&d, &h, &StoppingRule::default()).unwrap();
        let lp = lp_exact_error(&d, &h).unwrap();
        worst = worst.max((st.norm() - lp.error).abs());
        largest = largest.max(d.num_points());
        instances.push(Instance { d, h, st, lp });
    }
    let elapsed = t.elapsed();
    outcome(
        worst <= 1e-6 && elapsed < Duration::from_secs(60),
        format!(
            "50 grids (largest {largest} points): max |levelled − LP| = {worst:.3e} (tol 1e-6), {:.2} s (limit 60 s)",
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(instances: &[Instance]) -> Outcome {
    let mut worst_rise = f64::NEG_INFINITY;
    for inst in instances {
        for w in inst.st.norm_history.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    outcome(
        worst_rise <= 1e-12,
        format!("largest step-to-step increase {worst_rise:.3e} (tol 1e-12)"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let d = random_domain(&mut rng, 30, 6);
        let h = uniform_field(&d, &mut rng);
        let factor = rng.gen_range(0..2);
        let f = random_factor_function(&d, factor, &mut rng);
        let gap = central_symmetry_gap(&d, &h, &f).unwrap();
        worst = worst.max(gap / (1.0 + h.sup_norm() + f.sup_norm()));
    }
    outcome(
        worst <= 1e-12,
        format!("1000 triples: max gap/(1+‖h‖+‖f‖) = {worst:.3e} (tol 1e-12)"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let d = random_domain(&mut rng, 30, 6);
        let v1 = uniform_field(&d, &mut rng).scaled(rng.gen_range(0.1..10.0));
        let v2 = uniform_field(&d, &mut rng);
        let factor = rng.gen_range(0..2);
        let a = proximity_op(&v1, &d, factor).unwrap();
        let b = proximity_op(&v2, &d, factor).unwrap();
        let lhs = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        worst = worst.max(lhs - v1.sub(&v2).sup_norm());
    }
    outcome(
        worst <= 1e-12,
        format!("1000 pairs: max ‖Fv1−Fv2‖ − ‖v1−v2‖ = {worst:.3e} (tol 1e-12)"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut mismatch = 0.0f64;
    let mut count = 0;
    let mut domains = 0;
    while count < 500 {
        let d = random_domain(&mut rng, 8, 3);
        domains += 1;
        let closed = enumerate_closed_bolts(&d, 6).unwrap();
        if closed.is_empty() {
            continue;
        }
        for _ in 0..5 {
            let b = &closed[rng.gen_range(0..closed.len())];
            let f = random_factor_function(&d, 0, &mut rng);
            let g = random_factor_function(&d, 1, &mut rng);
            let sum = lift(&f, &d).unwrap().add(&lift(&g, &d).unwrap());
            let v = bolt_functional(&d, b, &sum).unwrap();
            mismatch = mismatch.max((v - direct_functional(b, &sum)).abs());
            worst = worst.max(v.abs());
            count += 1;
        }
    }
    outcome(
        worst <= 1e-12 && mismatch <= 1e-12,
        format!(
            "{count} closed bolts on {domains} domains: max |r_l(f+g)| = {worst:.3e} (tol 1e-12), library vs direct {mismatch:.1e}"
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    let mut lengths = BTreeMap::new();
    while count < 500 {
        let d = random_domain(&mut rng, 8, 3);
        let all = enumerate_bolts(&d, 8);
        if all.is_empty() {
            continue;
        }
        for _ in 0..5 {
            let b = &all[rng.gen_range(0..all.len())];
            let factor = rng.gen_range(0..2);
            let f = random_factor_function(&d, factor, &mut rng);
            let m = b.len() as f64;
            let v = bolt_functional(&d, b, &lift(&f, &d).unwrap()).unwrap();
            worst = worst.max(v.abs() - 2.0 / m * f.sup_norm());
            *lengths.entry(b.len()).or_insert(0) += 1;
            count += 1;
        }
    }
    outcome(
        worst <= 1e-12,
        format!("{count} bolts (lengths {lengths:?}): max |r_l(f)| − (2/m)‖f‖ = {worst:.3e} (tol 1e-12)"),
    )
}

fn criterion_7() -> Outcome {
    let mut domains: Vec<Domain> = Vec::new();
    for a in 1..=9 {
        for b in 1..=9 / a {
            domains.push(grid(&[a, b]));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..40 {
        domains.push(random_domain(&mut rng, 9, 4));
    }
    let mut checked = 0usize;
    let mut failures = 0usize;
    for d in &domains {
        for b in enumerate_bolts(d, 6) {
            let norm = bolt_functional_norm(d, &b).unwrap();
            let disjoint = direct_disjoint(&b);
            if (norm == 1.0) != disjoint || (norm - direct_norm(&b)).abs() > 1e-15 {
                failures += 1;
            }
            checked += 1;
        }
    }
    outcome(
        failures == 0 && checked > 0,
        format!("{checked} bolts of length ≤ 6 on {} domains: {failures} mismatches", domains.len()),
    )
}

fn golden() -> (Domain, Field) {
    (grid(&[2, 2]), Field(vec![0.0, 0.0, 0.0, 1.0]))
}

fn criterion_8(instances: &mut Vec<Instance>) -> Outcome {
    let (d, h) = golden();
    // brute force over components on a 1/8 lattice, gauge b(0) = 0
    let steps: Vec<f64> = (-8..=8).map(|k| f64::from(k) / 8.0).collect();
    let mut brute = f64::INFINITY;
    for &a0 in &steps {
        for &a1 in &steps {
            for &b1 in &steps {
                let approx = [a0, a0 + b1, a1, a1 + b1];
                let e = h.0.iter().zip(approx).map(|(v, w)| (v - w).abs()).fold(0.0, f64::max);
                brute = brute.min(e);
            }
        }
    }
    let lp = lp_exact_error(&d, &h).unwrap();
    let st = run_levelling(&d, &h, &StoppingRule::default()).unwrap();
    let eff = st.effective_steps(1e-12);
    let corner = Bolt::new(0, vec![0, 1, 3, 2]);
    let bound = certified_value(&corner, &h);
    let pass = (brute - 0.25).abs() <= 1e-12
        && (lp.error - 0.25).abs() <= 1e-12
        && (st.norm() - 0.25).abs() <= 1e-12
        && eff == 2
        && (bound - 0.25).abs() <= 1e-12;
    let detail = format!(
        "brute force {brute}, LP {}, levelled {} in {eff} effective steps, corner-cycle bound {bound}",
        lp.error,
        st.norm()
    );
    instances.push(Instance { d, h, st, lp });
    outcome(pass, detail)
}

fn criterion_9() -> Outcome {
    let t = Instant::now();
    let cap = 128;
    let res = [8u32, 16, 32, 64];
    let maxima = |region: &Region, res: &[u32]| -> Vec<Option<usize>> {
        res.iter()
            .map(|&n| max_irreducible_bolt_length(&generate_domain(region, n).unwrap(), cap).value())
            .collect()
    };
    let tri = maxima(&Region::TriangleAbc, &res);
    let tri_time = t.elapsed();
    let rect = maxima(&unit_square(), &res);
    // the union at N = 64 has ~25k points; coarser resolutions keep the
    // all-pairs search cheap
    let mut bar_worst = rect.iter().flatten().copied().max().unwrap_or(0);
    let mut bar_ok = true;
    for r in [Region::LShapeK1, Region::UnionNcu] {
        for m in maxima(&r, &res[..3]) {
            match m {
                Some(v) => bar_worst = bar_worst.max(v),
                None => bar_ok = false,
            }
        }
    }
    let increasing = tri.iter().all(Option::is_some) && tri.windows(2).all(|w| w[1] > w[0]);
    let rect_ok = rect.iter().all(|m| *m == Some(3));
    let pass = increasing && rect_ok && bar_ok && bar_worst <= 4 && tri_time < Duration::from_secs(120);
    let show = |v: &[Option<usize>]| -> Vec<String> {
        v.iter()
            .map(|m| m.map_or("exceeds_cap".into(), |x| x.to_string()))
            .collect()
    };
    outcome(
        pass,
        format!(
            "triangle {:?} at N={res:?} in {:.2} s (limit 120 s), rectangle {:?}, bar domains (rectangle, lshape_K1, union_ncu) max {bar_worst} (limit 4)",
            show(&tri),
            tri_time.as_secs_f64(),
            show(&rect)
        ),
    )
}

fn criterion_10() -> Outcome {
    let xy = Expr::parse("x*y").unwrap();
    let res = [64u32, 128, 256];
    let union = cproperty_jump(&Region::UnionNcu, &xy, &res).unwrap();
    let uj = union.metric("max_jump_f0").unwrap().to_vec();
    let union_ok = uj.iter().all(|j| (j - 1.0).abs() <= 0.1);
    let rres = [8u32, 16, 64, 128, 256];
    let rect = cproperty_jump(&unit_square(), &xy, &rres).unwrap();
    let rj = rect.metric("max_jump_f0").unwrap().to_vec();
    let rect_ok = rj.iter().zip(rres).all(|(j, n)| *j <= 3.0 / f64::from(n));
    outcome(
        union_ok && rect_ok,
        format!("union_ncu jumps {uj:?} at N={res:?} (within 0.1 of 1), rectangle jumps × N = {:?} (limit 3)",
            rj.iter().zip(rres).map(|(j, n)| j * f64::from(n)).collect::<Vec<_>>()),
    )
}

fn criterion_11(instances: &[Instance]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut failed_certs = Vec::new();
    let budget = LowerBoundBudget::default();
    for (k, inst) in instances.iter().enumerate() {
        let lb = best_lower_bound(&inst.d, &inst.h, &budget).unwrap();
        worst = worst.max(lb.value - inst.lp.error);
        if let levelling_core::oracle::CertificateCheck::Fail(m) = verify_certificate(&inst.d, &inst.h, &inst.lp) {
            failed_certs.push(format!("#{k}: {m}"));
        }
    }
    outcome(
        worst <= 1e-12 && failed_certs.is_empty(),
        format!(
            "{} instances: max (lower bound − LP) = {worst:.3e} (tol 1e-12), certificate failures {failed_certs:?}",
            instances.len()
        ),
    )
}

fn criterion_12() -> Outcome {
    let stop = StoppingRule::default();
    let gaps = multifactor_search(12, 100, &stop).unwrap();
    let min_gap = gaps.iter().map(|g| g.gap).fold(f64::INFINITY, f64::min);
    let max_gap = gaps.iter().map(|g| g.gap).fold(f64::NEG_INFINITY, f64::max);
    let stalls = gaps.iter().filter(|g| g.stall_witness).count();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut control = 0.0f64;
    for _ in 0..20 {
        let d = grid(&[rng.gen_range(2..=10), rng.gen_range(2..=10)]);
        let h = uniform_field(&d, &mut rng);
        control = control.max(multi_factor_gap(&d, &h, &stop).unwrap().gap.abs());
    }
    outcome(
        min_gap >= -1e-9 && control <= 1e-6,
        format!(
            "100 three-factor instances: gap in [{min_gap:.3e}, {max_gap:.3e}] (floor −1e-9), {stalls} stall witnesses; two-factor control max |gap| {control:.3e} (tol 1e-6)"
        ),
    )
}

fn main() -> ExitCode {
    let mut instances = Vec::new();
    let mut results: Vec<(u32, Outcome, Duration)> = Vec::new();
    let mut timed = |k: u32, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        results.push((k, o, t.elapsed()));
    };
    timed(1, &mut || criterion_1(&mut instances));
    timed(2, &mut || criterion_2(&instances));
    timed(3, &mut criterion_3);
    timed(4, &mut criterion_4);
    timed(5, &mut criterion_5);
    timed(6, &mut criterion_6);
    timed(7, &mut criterion_7);
    timed(8, &mut || criterion_8(&mut instances));
    timed(9, &mut criterion_9);
    timed(10, &mut criterion_10);
    timed(11, &mut || criterion_11(&instances));
    timed(12, &mut criterion_12);

    let mut failed = 0;
    for (k, o, t) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {k:>2}: {tag}  {} [{:.2} s]", o.detail, t.as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
