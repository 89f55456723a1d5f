//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use deficiency::bounds::{
    commutator_to_iii, defect_invariance_gate, hardy_certificate, hardy_constant,
    hardy_form_bound, morgan_form_bound, morgan_operator_bound, operator_commutator_gate,
    BoundsError, PartitionData, RelativeBound,
};
use deficiency::channels::point_defect;
use deficiency::config::{LatticeGenerator, LatticeRegion};
use deficiency::decouple::{certificate, DecoupleOptions, PieceEvidence, Verdict};
use deficiency::partition::{lattice_partition, verify_scaling, RegionSpec};
use deficiency::support::{check_support_laws, CellSet, GridFunction};
use deficiency::weyl::{
    frobenius_classify_inverse_square, weyl_classify_numeric, RadialProblem,
    Side, Spectral, WeylOptions,
};
use deficiency::{DefectRecord, PotentialSpec, SingularityConfig};

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

fn point(c: f64, delta: f64) -> PotentialSpec {
    PotentialSpec::InverseSquarePoint {
        coupling: c,
        cutoff: delta,
        perturbation: None,
    }
}

/// Point defect vanishes exactly when `c ≥ −n(n−4)/4`.
fn threshold() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut exceptions = Vec::new();
    for n in 3..=8usize {
        let t = -((n as f64) * (n as f64 - 4.0)) / 4.0;
        for k in -32..=32 {
            let c = t + k as f64 / 32.0;
            let def0 = point_defect(n, c).expect("valid coupling").is_zero();
            checked += 1;
            if def0 != (c >= t) {
                exceptions.push((n, c));
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        exceptions.is_empty() && elapsed < Duration::from_secs(5),
        format!(
            "{checked} grid points, {} exceptions, {:.3} s",
            exceptions.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Numerical Weyl classifier against the `q ≥ 3/4` rule.
fn oracle_agreement() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut qs = vec![0.751, 0.749, -5.0, 5.0];
    while qs.len() < 500 {
        let q: f64 = rng.random_range(-5.0..=5.0);
        if (q - 0.75).abs() >= 1e-3 {
            qs.push(q);
        }
    }
    let opts = WeylOptions::default();
    let mut worst = Duration::ZERO;
    let mut mismatches = Vec::new();
    for &q in &qs {
        let t = Instant::now();
        let got = weyl_classify_numeric(&RadialProblem::inverse_square(q), Spectral::PlusI, &opts);
        worst = worst.max(t.elapsed());
        match got {
            Ok(c) if c == frobenius_classify_inverse_square(q) => {}
            other => mismatches.push((q, format!("{other:?}"))),
        }
    }
    outcome(
        mismatches.is_empty() && worst < Duration::from_millis(50),
        format!(
            "{} values, {} disagreements{}, slowest {:.1} ms",
            qs.len(),
            mismatches.len(),
            mismatches
                .first()
                .map(|(q, c)| format!(" (first q = {q}: {c})"))
                .unwrap_or_default(),
            worst.as_secs_f64() * 1e3
        ),
    )
}

const SHELLS: [(f64, f64); 5] = [(1.0, 3.0), (-1.0, 3.0), (1.0, 1.0), (2.0, 2.0), (0.5, 2.0)];

fn random_spec(rng: &mut ChaCha8Rng) -> PotentialSpec {
    if rng.random_bool(0.3) {
        let (strength, exponent) = SHELLS[rng.random_range(0..SHELLS.len())];
        PotentialSpec::Shell {
            strength,
            exponent,
            radius: 0.5,
            cutoff: 1.0,
        }
    } else {
        point(rng.random_range(-40..=40) as f64 / 4.0, rng.random_range(0.25..=1.0))
    }
}

/// Aggregate defect equals the sum over singleton configurations.
fn additivity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = DecoupleOptions {
        oracle: false,
        ..DecoupleOptions::default()
    };
    let mut failures = Vec::new();
    let mut sites = 0;
    for trial in 0..100 {
        let n = rng.random_range(3..=5usize);
        let count = rng.random_range(1..=20usize);
        let mut cells: Vec<[i64; 3]> = Vec::new();
        while cells.len() < count {
            let c = [rng.random_range(0..4), rng.random_range(0..4), rng.random_range(0..4)];
            if !cells.contains(&c) {
                cells.push(c);
            }
        }
        let mut cfg = SingularityConfig::new(n);
        let mut singles = Vec::new();
        for c in &cells {
            let mut pos = vec![0.0; n];
            for k in 0..3 {
                pos[k] = 4.0 * c[k] as f64;
            }
            let spec = random_spec(&mut rng);
            cfg = cfg.with_point(pos.clone(), spec.clone());
            singles.push(SingularityConfig::new(n).with_point(pos, spec));
        }
        sites += count;
        let total = certificate(&cfg, &opts).map(|c| c.total);
        let sum: Result<Option<DefectRecord>, _> = singles
            .iter()
            .map(|s| certificate(s, &opts).map(|c| c.total))
            .collect::<Result<Vec<_>, _>>()
            .map(|v| v.into_iter().sum::<Option<DefectRecord>>());
        match (total, sum) {
            (Ok(Some(t)), Ok(Some(s))) if t == s => {}
            (t, s) => failures.push(format!("trial {trial}: {t:?} vs {s:?}")),
        }
    }

    // infinite lattices: orbit defect 0 gives 0, positive gives ∞
    let lattice = |n: usize, c: f64| {
        let mut basis = vec![vec![0.0; n]; 2];
        basis[0][0] = 1.0;
        basis[1][1] = 1.0;
        SingularityConfig::new(n).with_lattice(LatticeGenerator {
            basis,
            origin: Vec::new(),
            region: LatticeRegion::Infinite,
            potential: point(c, 0.25),
        })
    };
    let cases = [
        (lattice(5, 0.0), Some(DefectRecord::ZERO)),
        (lattice(4, 1.0), Some(DefectRecord::ZERO)),
        (lattice(3, 0.0), Some(DefectRecord::symmetric(deficiency::ExtNat::Infinite))),
        (lattice(5, -10.0), Some(DefectRecord::symmetric(deficiency::ExtNat::Infinite))),
    ];
    for (i, (cfg, expected)) in cases.iter().enumerate() {
        let got = certificate(cfg, &opts).map(|c| c.total);
        if got.as_ref().ok() != Some(expected) {
            failures.push(format!("lattice case {i}: {got:?}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "100 random configs ({sites} sites), 4 lattice configs, {} failures{}",
            failures.len(),
            failures.first().map(|f| format!(": {f}")).unwrap_or_default()
        ),
    )
}

/// `z = +i` and `z = −i` give the same class.
fn conjugation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut opts;
    let mut mismatches = 0;
    let mut indeterminate = 0;
    for i in 0..50 {
        opts = WeylOptions::default();
        let p = match i % 4 {
            0 => RadialProblem::inverse_square(rng.random_range(-5.0..5.0)),
            1 => {
                let q0: f64 = rng.random_range(-3.0..4.0);
                let c1: f64 = rng.random_range(-2.0..2.0);
                RadialProblem::at_zero(move |r| q0 / (r * r) + c1 / r, 1.0)
            }
            2 => {
                let (beta, gamma) = SHELLS[rng.random_range(0..SHELLS.len())];
                if gamma > 2.0 {
                    opts.windows = 8;
                }
                let side = if rng.random_bool(0.5) { Side::Left } else { Side::Right };
                let q = std::sync::Arc::new(move |r: f64| beta * (r - 1.0f64).abs().powf(-gamma));
                match side {
                    Side::Left => RadialProblem::new(q, 1.0, 2.0, Side::Left, 1.25),
                    Side::Right => RadialProblem::new(q, 0.0, 1.0, Side::Right, 0.75),
                }
                .expect("interior anchor")
            }
            _ => {
                let k: f64 = rng.random_range(0.5..2.0);
                if rng.random_bool(0.5) {
                    let c: f64 = rng.random_range(-2.0..2.0);
                    RadialProblem::at_infinity(move |r| c / (1.0 + r) + k / (r * r), 1.0, 2.0)
                } else {
                    opts.infinite_windows = 5;
                    opts.fit_windows = 3;
                    RadialProblem::at_infinity(move |r| -k * r.powi(4), 0.0, 1.0)
                }
            }
        };
        let plus = weyl_classify_numeric(&p, Spectral::PlusI, &opts);
        let minus = weyl_classify_numeric(&p, Spectral::MinusI, &opts);
        match (plus, minus) {
            (Ok(a), Ok(b)) if a == b => {
                if a.is_indeterminate() {
                    indeterminate += 1;
                }
            }
            (a, b) => {
                if std::env::var("ACC_DEBUG").is_ok() {
                    eprintln!("problem {i}: {a:?} vs {b:?}");
                }
                mismatches += 1
            }
        }
    }
    outcome(
        mismatches == 0,
        format!("50 problems, {mismatches} disagreements ({indeterminate} indeterminate on both sides)"),
    )
}

/// Cutoff bounds and ε-invariance of the scaled derivative constants.
fn cutoff_scaling() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for n in 1..=3usize {
        let o = vec![0.0; n];
        let pairs = [
            (
                "ball",
                RegionSpec::complement_of_ball(o.clone(), 2.0),
                RegionSpec::ball(o.clone(), 1.0),
            ),
            (
                "complement",
                RegionSpec::ball(o.clone(), 1.0),
                RegionSpec::complement_of_ball(o.clone(), 2.0),
            ),
        ];
        for (name, f0, f1) in pairs {
            let r = verify_scaling(&f0, &f1, 1.0, &[0.1, 1.0, 10.0], n, 48).expect("separated");
            let worst = r
                .reports
                .iter()
                .map(|v| v.range_violation.max(v.f0_violation).max(v.f1_violation))
                .fold(0.0, f64::max);
            pass &= r.pass;
            lines.push(format!(
                "n={n} {name}: bounds {worst:.0e}, spread {:.1e}/{:.1e}",
                r.spread[0], r.spread[1]
            ));
        }
    }
    outcome(pass, lines.join("; "))
}

/// Exact Morgan arithmetic and the strict gate.
fn morgan() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    for _ in 0..10_000 {
        let a = rng.random_range(0.0..2.0);
        let b = rng.random_range(0.0..100.0);
        let c = rng.random_range(0.01..3.0);
        let d = rng.random_range(0.01..3.0);
        let e = rng.random_range(0.0..50.0);
        let eps = rng.random_range(1e-3..10.0);
        let p = PartitionData::new(c, d, e).unwrap();
        let f = morgan_form_bound(RelativeBound::form(a, b).unwrap(), p).unwrap();
        let o = morgan_operator_bound(RelativeBound::operator(a, b).unwrap(), p).unwrap();
        let expect = (a * c * d, a * c * e + b * c);
        if (f.a, f.b) != expect || (o.a, o.b) != expect {
            bad += 1;
        }
        if commutator_to_iii(e, eps).unwrap() != (1.0 + eps, (1.0 + eps) * e / eps) {
            bad += 1;
        }
        if operator_commutator_gate(eps, e).unwrap()
            != (eps * eps / (4.0 + 2.0 * eps), eps * e / (2.0 + eps))
        {
            bad += 1;
        }
    }
    let gate = |a: f64| defect_invariance_gate(&RelativeBound::operator(a, 0.0).unwrap());
    let below = f64::from_bits(1.0f64.to_bits() - 1);
    let above = f64::from_bits(1.0f64.to_bits() + 1);
    let flips = gate(below) && !gate(1.0) && !gate(above) && gate(0.0);
    outcome(
        bad == 0 && flips,
        format!("10000 tuples, {bad} mismatches, gate strict at 1: {flips}"),
    )
}

/// Hardy bound against the quadrature oracle.
fn hardy() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for n in 3..=5usize {
        let limit = hardy_constant(n);
        let cert = hardy_certificate(n, 0.9 * limit, 200, 7 + n as u64).unwrap();
        let rejected = matches!(hardy_form_bound(n, limit), Err(BoundsError::HardyViolation { .. }));
        pass &= cert.pass && cert.max_ratio <= cert.bound.a + 1e-6 && rejected;
        lines.push(format!(
            "n={n} a={:.3} max ratio {:.6}, limit rejected {rejected}",
            cert.bound.a, cert.max_ratio
        ));
    }
    outcome(pass, lines.join("; "))
}

/// Normalized lattice partition.
fn lattice() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut lines = Vec::new();
    let mut pass = true;
    for n in 1..=3usize {
        let p = lattice_partition(n).unwrap();
        let mut sum_err = 0.0f64;
        let mut cross = 0.0f64;
        for _ in 0..1000 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            sum_err = sum_err.max((p.sum_of_squares(&x) - 1.0).abs());
            cross = cross.max(p.cross_term(&x));
        }
        let min = p.cell_minimum(if n == 3 { 21 } else { 41 });
        pass &= sum_err <= 1e-10 && cross <= 1e-10 && min >= 0.5;
        lines.push(format!(
            "n={n} |Σφ²−1| {sum_err:.1e}, |Σφ∇φ| {cross:.1e}, cell min {min:.4}"
        ));
    }
    outcome(pass, lines.join("; "))
}

fn random_grid(rng: &mut ChaCha8Rng, shape: &[usize], domain: &CellSet) -> GridFunction {
    let density = rng.random_range(0.05..0.6);
    let values = (0..domain.cells.len())
        .map(|i| {
            if !domain.cells[i] {
                f64::NAN
            } else if rng.random_bool(density) {
                rng.random_range(-2.0..2.0)
            } else {
                0.0
            }
        })
        .collect();
    let spacing = vec![rng.random_range(0.1..2.0); shape.len()];
    GridFunction::new(vec![0.0; shape.len()], spacing, values, domain.clone()).unwrap()
}

/// Support calculus on random grid pairs.
fn support_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let laws = ["spt-2", "spt-4", "spt-5", "spt-6", "spt-aaa"];
    let mut failures = 0;
    for n in 1..=2usize {
        for _ in 0..1000 {
            let shape: Vec<usize> = (0..n)
                .map(|_| if n == 1 { rng.random_range(4..64) } else { rng.random_range(3..16) })
                .collect();
            let keep = rng.random_range(0.5..1.0);
            let domain = CellSet {
                cells: (0..shape.iter().product())
                    .map(|_| rng.random_bool(keep))
                    .collect(),
                shape: shape.clone(),
            };
            let tau = if rng.random_bool(0.8) { 0.0 } else { rng.random_range(0.0..1.0) };
            let f = random_grid(&mut rng, &shape, &domain).with_tolerance(tau);
            let mut g = random_grid(&mut rng, &shape, &domain);
            g.spacing = f.spacing.clone();
            let g = g.with_tolerance(tau);
            let r = check_support_laws(&f, &g).unwrap();
            if !laws.iter().all(|l| r.get(l).is_some_and(|x| x.pass)) {
                failures += 1;
            }
        }
    }
    outcome(failures == 0, format!("2000 pairs (n = 1, 2), {failures} failures"))
}

/// `−Δ` on `ℝⁿ ∖ {0}` through the full pipeline.
fn classical() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for n in 3..=8usize {
        let cfg = SingularityConfig::new(n).with_point(vec![0.0; n], point(0.0, 1.0));
        let cert = certificate(&cfg, &DecoupleOptions::default()).unwrap();
        let expected = if n == 3 {
            DefectRecord::symmetric(1)
        } else {
            DefectRecord::ZERO
        };
        let mut resolved = 0;
        let mut borderline = 0;
        for p in &cert.pieces {
            if let PieceEvidence::Channels { oracle, .. } = &p.evidence {
                for o in oracle {
                    if o.numeric == o.closed_form {
                        resolved += 1;
                    } else if o.numeric.is_indeterminate() && (o.q_eff - 0.75).abs() < 1e-3 {
                        borderline += 1;
                    } else {
                        pass = false;
                    }
                }
            }
        }
        let verdict_ok = match n {
            3 => cert.verdict == Verdict::PositiveDefect { defect: 1 },
            _ => cert.verdict == Verdict::EssentiallySelfAdjoint,
        };
        if std::env::var("ACC_DEBUG").is_ok() {
            eprintln!("n={n} {:?} {:?} {:?}", cert.total, cert.verdict, cert.warnings);
        }
        // the only tolerated warning is the exact q = 3/4 channel
        pass &= cert.total == Some(expected)
            && verdict_ok
            && cert.warnings.len() == borderline;
        lines.push(format!(
            "n={n} def {}{}",
            cert.total.map(|t| t.def().to_string()).unwrap_or("?".into()),
            if borderline > 0 {
                format!(" (oracle {resolved} agree, {borderline} at q = 3/4 exactly)")
            } else {
                format!(" (oracle {resolved} agree)")
            }
        ));
    }
    outcome(pass, lines.join("; "))
}

/// Golden reports reproduced byte for byte.
fn golden() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut lines = Vec::new();
    let mut pass = true;
    for name in ["single_point", "five_point_mixed", "lattice_z2"] {
        let out = Command::new(env!("CARGO_BIN_EXE_deficiency"))
            .args(["defect", "--omit-timing", "--config"])
            .arg(dir.join(format!("{name}.toml")))
            .output()
            .expect("binary runs");
        let expected = std::fs::read(dir.join(format!("{name}.json"))).unwrap();
        let same = out.stdout == expected;
        pass &= same;
        lines.push(format!("{name} {}", if same { "identical" } else { "differs" }));
    }
    outcome(pass, lines.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("point-defect threshold", threshold),
        ("Weyl oracle agreement", oracle_agreement),
        ("decoupling additivity", additivity),
        ("conjugation symmetry", conjugation),
        ("cutoff construction", cutoff_scaling),
        ("Morgan arithmetic", morgan),
        ("Hardy certificate", hardy),
        ("lattice partition", lattice),
        ("support laws", support_laws),
        ("classical cross-checks", classical),
        ("golden reports", golden),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        println!(
            "[{}] {:>2} {name}: {} ({:.2} s)",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
