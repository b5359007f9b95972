//! Acceptance suite. Prints one PASS/FAIL line per check and exits non-zero
//! if any check fails.

use std::fs;
use std::process::ExitCode;

use aggrodyn::cli::cmd_analyze;
use aggrodyn::corpus::{synthesize_corpus, Channel};
use aggrodyn::meanfield::{
    controlled_equilibrium, controlled_step, effective_slope, equilibrium, fit_from_observables,
    floor, project, step, ControlPolicy, ModelParams,
};
use aggrodyn::montecarlo::{simulate, SimConfig};
use aggrodyn::stats::{cramers_v, estimate_channel, ContingencyTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CASES: usize = 256;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, id: &str, name: &str, ok: bool, detail: String) {
        println!(
            "[{}] {id} {name}: {detail}",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            self.failures += 1;
        }
    }
}

fn p_opp() -> ModelParams {
    fit_from_observables(0.16, 0.134, 0.5, 0.100).expect("P_opp is feasible")
}

fn p_oth() -> ModelParams {
    fit_from_observables(0.373, 0.326, 0.5, 0.250).expect("P_oth is feasible")
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    ModelParams::new(rng.gen(), rng.gen(), rng.gen(), rng.gen()).unwrap()
}

fn criterion_1(r: &mut Report) {
    for (label, p, target) in [("opp", p_opp(), 0.16), ("oth", p_oth(), 0.373)] {
        let c = p.composites();
        let closed = c.offset_c / (1.0 - c.slope_s);
        let x = equilibrium(&p).unwrap().x_star;
        let ok = (x - closed).abs() <= 1e-9 && (x - target).abs() <= 1e-9;
        r.check(
            "1",
            &format!("uncontrolled equilibrium {label}"),
            ok,
            format!("x* = {x:.12} (target {target})"),
        );
    }
}

fn criterion_2(r: &mut Report) {
    for (label, p, target) in [("opp", p_opp(), 0.134), ("oth", p_oth(), 0.326)] {
        let f = floor(&p);
        r.check(
            "2",
            &format!("floor {label}"),
            (f - target).abs() <= 1e-15,
            format!("c = {f:.15}"),
        );
        let soft = controlled_equilibrium(&p, &ControlPolicy::soft(750, 1_000_000_000_000_000))
            .unwrap()
            .x_star;
        let hard = controlled_equilibrium(&p, &ControlPolicy::hard(750, 750))
            .unwrap()
            .x_star;
        r.check(
            "2",
            &format!("soft add->inf and full deletion reach floor {label}"),
            (soft - target).abs() <= 1e-9 && (hard - target).abs() <= 1e-9,
            format!("soft {soft:.12}, hard {hard:.12}"),
        );
    }
}

fn criterion_3(r: &mut Report) {
    let n = 750.0;
    let budget = 75.0;
    let beta = n / (n + budget);
    let d = budget / n;
    for (label, p, soft_reported, hard_reported) in [
        ("opp", p_opp(), 0.157, 0.14),
        ("oth", p_oth(), 0.368, 0.358),
    ] {
        let c = p.composites();
        let (cc, s) = (c.offset_c, c.slope_s);
        let soft_closed = cc / (1.0 - s * beta);
        let hard_closed = (cc * (1.0 - d) - s * d) / ((1.0 - d) - s);
        let soft = controlled_equilibrium(&p, &ControlPolicy::soft(750, 75))
            .unwrap()
            .x_star;
        let hard = controlled_equilibrium(&p, &ControlPolicy::hard(750, 75))
            .unwrap()
            .x_star;
        r.check(
            "3",
            &format!("soft 10% {label}"),
            (soft - soft_closed).abs() <= 1e-9 && (soft - soft_reported).abs() <= 0.006,
            format!("x* = {soft:.6}, closed form {soft_closed:.6}, reported {soft_reported}"),
        );
        r.check(
            "3",
            &format!("hard 10% {label}"),
            (hard - hard_closed).abs() <= 1e-9 && (hard - hard_reported).abs() <= 0.006,
            format!("x* = {hard:.6}, closed form {hard_closed:.6}, reported {hard_reported}"),
        );
    }
}

fn criterion_4(r: &mut Report) {
    for (label, p) in [("opp", p_opp()), ("oth", p_oth())] {
        for (pname, policy) in [
            ("none", ControlPolicy::uncontrolled(750)),
            ("soft", ControlPolicy::soft(750, 75)),
            ("hard", ControlPolicy::hard(750, 75)),
        ] {
            let cfg = SimConfig {
                horizon: 30,
                n_per_step: 750,
                x0: 0.5,
                replications: 200,
                seed: 42,
            };
            let e = simulate(&p, &policy, &cfg).unwrap();
            let mf = project(cfg.x0, &p, &policy, cfg.horizon).unwrap();
            let worst_z = e
                .steps
                .iter()
                .zip(e.std_errors())
                .zip(&mf.points)
                .map(|((s, se), q)| (s.mean_x_raw - q.x_raw).abs() / se)
                .fold(0.0f64, f64::max);
            let x_star = controlled_equilibrium(&p, &policy).unwrap().x_star;
            let terminal = e.steps.last().unwrap().mean_x_raw;
            r.check(
                "4",
                &format!("Monte Carlo vs mean field {label}/{pname}"),
                worst_z <= 4.0 && (terminal - x_star).abs() <= 0.005,
                format!("max |z| = {worst_z:.2}, terminal {terminal:.4} vs x* {x_star:.4}"),
            );
        }
    }
}

fn criterion_5(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from(
        "id,parent_kind,parent_id,stance,logic,experience,hate,aggr_opponent,aggr_other,stance_p,logic_p,experience_p,hate_p,aggr_opponent_p,aggr_other_p\n",
    );
    for i in 0..100 {
        let stance = if i < 24 {
            0
        } else if i < 35 {
            1
        } else {
            2
        };
        let flags = [
            i % 25 == 0,
            i >= 93,
            (40..57).contains(&i),
            i < 14,
            (14..53).contains(&i),
        ]
        .map(u8::from);
        text.push_str(&format!(
            "r{i},post,,{stance},{},{},{},{},{},,,,,,\n",
            flags[0], flags[1], flags[2], flags[3], flags[4]
        ));
    }
    let corpus = dir.path().join("fig1.csv");
    fs::write(&corpus, text).unwrap();
    let out = cmd_analyze(&corpus, &dir.path().join("out"), false).unwrap();
    let csv = fs::read_to_string(dir.path().join("out/marginals.csv")).unwrap();
    for (feature, expected) in [
        ("logic", 0.04),
        ("experience", 0.07),
        ("aggr_opponent", 0.14),
        ("aggr_other", 0.39),
        ("overall_aggression", 0.53),
        ("hate", 0.17),
    ] {
        let got = out.marginals.share(feature).unwrap();
        let expected: f64 = expected;
        let line = format!(
            "{feature},{},{expected:.6}",
            (expected * 100.0).round() as u64
        );
        r.check(
            "5",
            &format!("marginal {feature}"),
            got == expected && csv.contains(&line),
            format!("{got}"),
        );
    }
}

fn criterion_6(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    // contraction and convergence from arbitrary starts
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < CASES {
        let p = random_params(&mut rng);
        let s = p.composites().slope_s;
        let (x, y) = (rng.gen::<f64>(), rng.gen::<f64>());
        worst = worst.max(
            ((step(x, &p).unwrap() - step(y, &p).unwrap()).abs() - s.abs() * (x - y).abs()).abs(),
        );
        if s.abs() <= 0.95 {
            let x_star = equilibrium(&p).unwrap().x_star;
            let t = project(x, &p, &ControlPolicy::uncontrolled(750), 600).unwrap();
            worst = worst.max((t.points.last().unwrap().x_raw - x_star).abs());
            cases += 1;
        }
    }
    r.check(
        "6",
        "contraction and convergence from any x0",
        worst <= 1e-9,
        format!("{cases} cases, max residual {worst:.2e}"),
    );

    // range preservation under random policies
    let mut in_range = true;
    for _ in 0..CASES {
        let p = random_params(&mut rng);
        let n = rng.gen_range(1..2000);
        let policy = ControlPolicy {
            n_per_step: n,
            add_per_step: rng.gen_range(0..3000),
            delete_per_step: rng.gen_range(0..=n),
        };
        for q in project(rng.gen(), &p, &policy, 30).unwrap().points {
            in_range &= (0.0..=1.0).contains(&q.x_raw) && (0.0..=1.0).contains(&q.x_pool);
        }
        let (next, pool) = controlled_step(rng.gen(), &p, &policy).unwrap();
        in_range &= (0.0..=1.0).contains(&next) && (0.0..=1.0).contains(&pool);
    }
    r.check(
        "6",
        "range preservation",
        in_range,
        format!("{CASES} cases"),
    );

    // equilibrium equals the iterate limit, controlled maps included
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < CASES {
        let p = random_params(&mut rng);
        let n = rng.gen_range(1..2000);
        let policy = ControlPolicy {
            n_per_step: n,
            add_per_step: rng.gen_range(0..3000),
            delete_per_step: if cases % 2 == 0 {
                0
            } else {
                rng.gen_range(0..=n)
            },
        };
        if p.composites().slope_s.abs() > 0.95 || effective_slope(&p, &policy).abs() > 0.95 {
            continue;
        }
        let x_star = controlled_equilibrium(&p, &policy).unwrap().x_star;
        let limit = project(rng.gen(), &p, &policy, 800)
            .unwrap()
            .points
            .last()
            .unwrap()
            .x_raw;
        worst = worst.max((x_star - limit).abs());
        cases += 1;
    }
    r.check(
        "6",
        "equilibrium = iterate limit",
        worst <= 1e-9,
        format!("{cases} cases, max gap {worst:.2e}"),
    );

    // floor <= hard <= soft <= x* at equal budgets, s >= 0, on the low-aggression
    // side of the (1 + d)/2 crossover
    let mut ok = true;
    let mut cases = 0;
    let mut crossover_cases = 0;
    while cases < CASES {
        let p = random_params(&mut rng);
        let s = p.composites().slope_s;
        if !(0.0..1.0).contains(&s) {
            continue;
        }
        let n = rng.gen_range(1..2000u64);
        let budget = rng.gen_range(1..=n);
        let d = budget as f64 / n as f64;
        let x = equilibrium(&p).unwrap().x_star;
        let soft = controlled_equilibrium(&p, &ControlPolicy::soft(n, budget))
            .unwrap()
            .x_star;
        let hard = controlled_equilibrium(&p, &ControlPolicy::hard(n, budget))
            .unwrap()
            .x_star;
        let tol = 1e-12;
        if soft <= (1.0 + d) / 2.0 {
            ok &= floor(&p) <= hard + tol && hard <= soft + tol && soft <= x + tol;
            cases += 1;
        } else {
            // aggressive-majority pools: injection dilutes more than deletion
            ok &= hard + tol >= soft && soft <= x + tol;
            crossover_cases += 1;
        }
    }
    r.check(
        "6",
        "ordering floor <= hard <= soft <= x*",
        ok,
        format!("{cases} cases below (1+d)/2, {crossover_cases} above with reversed hard/soft"),
    );

    // dynamics depend only on (c, s)
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < CASES {
        let p = random_params(&mut rng);
        let c = p.composites();
        let alpha2: f64 = rng.gen_range(0.01..0.99);
        let nonaggr2: f64 = rng.gen();
        let q = ModelParams {
            alpha: alpha2,
            p_reply_post: (c.offset_c - alpha2 * nonaggr2) / (1.0 - alpha2),
            p_reply_aggr: nonaggr2 + c.slope_s / alpha2,
            p_reply_nonaggr: nonaggr2,
        };
        if q.validate().is_err() {
            continue;
        }
        let policy = ControlPolicy {
            n_per_step: 750,
            add_per_step: rng.gen_range(0..200),
            delete_per_step: rng.gen_range(0..200),
        };
        let x0 = rng.gen();
        let a = project(x0, &p, &policy, 25).unwrap();
        let b = project(x0, &q, &policy, 25).unwrap();
        for (u, v) in a.points.iter().zip(&b.points) {
            worst = worst.max((u.x_raw - v.x_raw).abs());
        }
        cases += 1;
    }
    r.check(
        "6",
        "(alpha, p_nonaggr) invariance at fixed (c, s)",
        worst <= 1e-12,
        format!("{cases} cases, max gap {worst:.2e}"),
    );

    // fit_from_observables round trip
    let mut worst = 0.0f64;
    let mut cases = 0;
    while cases < CASES {
        let x_star: f64 = rng.gen_range(0.01..0.99);
        let floor_c = x_star * rng.gen::<f64>();
        let Ok(p) = fit_from_observables(x_star, floor_c, rng.gen_range(0.05..0.95), rng.gen())
        else {
            continue;
        };
        let e = equilibrium(&p).unwrap();
        worst = worst
            .max((e.x_star - x_star).abs())
            .max((e.floor - floor_c).abs());
        cases += 1;
    }
    r.check(
        "6",
        "fit_from_observables round trip",
        worst <= 1e-12,
        format!("{cases} cases, max gap {worst:.2e}"),
    );

    // estimation round trip: 3-SE coverage over 4 estimates per corpus
    let mut beyond = 0;
    let mut worst_z = 0.0f64;
    let checks = 4 * 200;
    for _ in 0..200 {
        let p = ModelParams::new(
            rng.gen_range(0.2..0.8),
            rng.gen_range(0.05..0.95),
            rng.gen_range(0.05..0.95),
            rng.gen_range(0.05..0.95),
        )
        .unwrap();
        let channel = if rng.gen() {
            Channel::Other
        } else {
            Channel::Opponent
        };
        let c = synthesize_corpus(&p, 10, 400, 0.5, rng.gen(), channel).unwrap();
        let e = estimate_channel(&c, channel).unwrap();
        for (est, truth) in [
            (e.alpha, p.alpha),
            (e.p_reply_post, p.p_reply_post),
            (e.p_reply_aggr, p.p_reply_aggr),
            (e.p_reply_nonaggr, p.p_reply_nonaggr),
        ] {
            let z =
                (est.point - truth).abs() / (truth * (1.0 - truth) / est.denominator as f64).sqrt();
            worst_z = worst_z.max(z);
            beyond += usize::from(z > 3.0);
        }
    }
    r.check(
        "6",
        "estimation round trip within 3 binomial SE",
        beyond * 100 <= checks && worst_z <= 5.0,
        format!("{beyond} of {checks} estimates beyond 3 SE (nominal 0.27%), max |z| {worst_z:.2}"),
    );

    // Cramér's V bounds, permutation invariance and fixed tables
    let mut ok = true;
    for _ in 0..CASES {
        let (rows, cols) = (rng.gen_range(2..5), rng.gen_range(2..5));
        let counts: Vec<Vec<u64>> = (0..rows)
            .map(|_| (0..cols).map(|_| rng.gen_range(0..50)).collect())
            .collect();
        if counts.iter().flatten().sum::<u64>() == 0 {
            continue;
        }
        let v = cramers_v(&ContingencyTable::from_counts(counts.clone()));
        let mut permuted = counts.clone();
        permuted.reverse();
        for row in &mut permuted {
            row.rotate_left(1);
        }
        let pv = cramers_v(&ContingencyTable::from_counts(permuted));
        ok &= (0.0..=1.0).contains(&v.value) && (pv.value - v.value).abs() <= 1e-12;
    }
    let fixed = |c: Vec<Vec<u64>>| cramers_v(&ContingencyTable::from_counts(c)).value;
    let (a, b, c) = (
        fixed(vec![vec![10, 0], vec![0, 10]]),
        fixed(vec![vec![5, 5], vec![5, 5]]),
        fixed(vec![vec![20, 10], vec![10, 20]]),
    );
    ok &= a == 1.0 && b == 0.0 && (c - 0.3333).abs() <= 5e-5;
    r.check(
        "6",
        "Cramér's V bounds, permutation invariance, fixed tables",
        ok,
        format!("1.0 -> {a}, 0.0 -> {b}, 0.3333 -> {c:.4}"),
    );

    // simulator bit-determinism
    let mut identical = true;
    for _ in 0..CASES {
        let p = random_params(&mut rng);
        let policy = ControlPolicy {
            n_per_step: 100,
            add_per_step: rng.gen_range(0..50),
            delete_per_step: rng.gen_range(0..=100),
        };
        let cfg = SimConfig {
            horizon: 5,
            n_per_step: 100,
            x0: rng.gen(),
            replications: 3,
            seed: rng.gen(),
        };
        identical &= simulate(&p, &policy, &cfg).unwrap() == simulate(&p, &policy, &cfg).unwrap();
    }
    r.check(
        "6",
        "simulator bit-determinism",
        identical,
        format!("{CASES} cases"),
    );
}

fn criterion_7(r: &mut Report) {
    let p = p_opp();
    let t = project(0.5, &p, &ControlPolicy::uncontrolled(750), 4).unwrap();
    let gap = (t.points[3].x_raw - equilibrium(&p).unwrap().x_star).abs();
    r.check(
        "7",
        "convergence by t = 4 from x0 = 0.5",
        gap <= 0.0015,
        format!("|x(4) - x*| = {gap:.6}"),
    );
}

fn main() -> ExitCode {
    let mut r = Report { failures: 0 };
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    if r.failures == 0 {
        println!("acceptance: all checks passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} check(s) failed", r.failures);
        ExitCode::FAILURE
    }
}
