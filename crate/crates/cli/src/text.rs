//! Human-readable summaries.

use std::fmt::Write as _;

use deficiency::decouple::{DefectCertificate, PieceDefect, PieceEvidence};

use crate::report::{
    BoundsResult, CertifyResult, ClassifyResult, PartitionResult, RunReport, SupportResult,
};

fn header<T>(r: &RunReport<T>) -> String {
    format!(
        "deficiency {} {} [{}]\n",
        r.tool_version, r.subcommand, r.input_digest
    )
}

fn footer<T>(s: &mut String, r: &RunReport<T>) {
    for w in &r.warnings {
        writeln!(s, "warning: {w}").unwrap();
    }
    if let Some(t) = &r.timing {
        writeln!(s, "elapsed {:.1} ms", t.elapsed_ms).unwrap();
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or("unbounded".into(), |v| format!("{v}"))
}

fn piece_line(p: &PieceDefect) -> String {
    let def = p
        .defect
        .map_or("indeterminate".into(), |d| format!("{d} def {}", d.def()));
    let detail = match &p.evidence {
        PieceEvidence::Channels {
            coupling,
            limit_circle,
            limit_point_from,
            ..
        } => {
            let lc: Vec<String> = limit_circle
                .iter()
                .map(|(l, _, m)| format!("ℓ={l}×{m}"))
                .collect();
            format!(
                "c = {coupling}, LC channels [{}], LP from ℓ = {limit_point_from}",
                lc.join(" ")
            )
        }
        PieceEvidence::Shell { sides } => match sides {
            Some(s) => format!("shell sides {} / {}", s.inner, s.outer),
            None => "shell".into(),
        },
        PieceEvidence::Indeterminate { reason } => reason.clone(),
    };
    format!("  {:<12} {:<22} {def}  ({detail})", p.label, p.kind)
}

pub fn defect(r: &RunReport<DefectCertificate>) -> String {
    let c = &r.result;
    let mut s = header(r);
    writeln!(
        s,
        "dimension {}  ε = {}  split = {}",
        c.dimension,
        opt(c.epsilon),
        opt(c.split)
    )
    .unwrap();
    for p in &c.pieces {
        writeln!(s, "{}", piece_line(p)).unwrap();
    }
    if let Some(o) = &c.orbit {
        writeln!(s, "{}", piece_line(&o.piece)).unwrap();
        let contrib = o.contribution.map_or("indeterminate".into(), |d| d.def().to_string());
        writeln!(s, "  lattice orbit {} contributes {contrib}", o.generator).unwrap();
    }
    let total = c.total.map_or("indeterminate".into(), |t| format!("{t} def {}", t.def()));
    writeln!(s, "total {total}: {}", c.verdict).unwrap();
    for n in &c.notes {
        writeln!(s, "note: {n}").unwrap();
    }
    footer(&mut s, r);
    s
}

pub fn certify(r: &RunReport<CertifyResult>) -> String {
    let mut s = header(r);
    writeln!(s, "{}", r.result.verdict).unwrap();
    footer(&mut s, r);
    s
}

pub fn classify(r: &RunReport<ClassifyResult>) -> String {
    let c = &r.result;
    let mut s = header(r);
    writeln!(
        s,
        "q = {} at z = {}: {} (closed form {}), ν̂ = {:.6}",
        c.q_eff, c.spectral_parameter, c.class, c.closed_form, c.nu_hat
    )
    .unwrap();
    footer(&mut s, r);
    s
}

pub fn partition(r: &RunReport<PartitionResult>) -> String {
    let p = &r.result;
    let mut s = header(r);
    writeln!(
        s,
        "dimension {}  ε = {}  members {}{}",
        p.dimension,
        p.epsilon,
        p.members,
        if p.lattice_orbit { " + lattice orbit" } else { "" }
    )
    .unwrap();
    for c in &p.cutoffs {
        let v = &c.verification;
        writeln!(
            s,
            "  {:<12} {:<9} δ = {}  plateau {:.6}  support {:.6}  range {:.1e}  F0 {:.1e}  F1 {:.1e}  {}",
            c.label,
            c.role,
            c.core_radius,
            c.plateau_radius,
            c.support_radius,
            v.range_violation,
            v.f0_violation,
            v.f1_violation,
            if v.pass { "ok" } else { "FAIL" }
        )
        .unwrap();
    }
    let f = &p.family;
    writeln!(
        s,
        "support gaps φ {:.6}  φ̃ {:.6}  nesting error {:.1e}  max overlap {}",
        f.phi_gap, f.phi_tilde_gap, f.nesting_error, f.max_overlap
    )
    .unwrap();
    let k = &p.constants;
    writeln!(s, "constants e = {:.6}  α = {:.6}  β = {:.6}", k.e, k.alpha, k.beta).unwrap();
    writeln!(s, "{}", if p.pass { "pass" } else { "FAIL" }).unwrap();
    footer(&mut s, r);
    s
}

pub fn bounds(r: &RunReport<BoundsResult>) -> String {
    let b = &r.result;
    let mut s = header(r);
    if let Some(h) = &b.hardy {
        writeln!(
            s,
            "Hardy n = {} γ = {}: a = {}  oracle max ratio {:.9} over {} profiles",
            h.dimension, h.gamma, h.bound.a, h.max_ratio, h.profiles
        )
        .unwrap();
    }
    if let Some(c) = &b.commutator {
        writeln!(s, "commutator ẽ = {} ε = {}: d = {}  e = {}", c.e_tilde, c.epsilon, c.d, c.e).unwrap();
    }
    if let Some((t, i)) = b.commutator_gate {
        writeln!(s, "sufficient commutator bound: {t} ‖Tf‖² + {i} ‖f‖²").unwrap();
    }
    if let (Some(l), Some(g)) = (&b.local, &b.global) {
        writeln!(s, "local ({}, {}) → global ({}, {})", l.a, l.b, g.a, g.b).unwrap();
    }
    if let Some(g) = b.leading_below_one {
        writeln!(s, "leading coefficient below 1: {g}").unwrap();
    }
    writeln!(s, "{}", if b.pass { "pass" } else { "FAIL" }).unwrap();
    footer(&mut s, r);
    s
}

pub fn support(r: &RunReport<SupportResult>) -> String {
    let p = &r.result;
    let mut s = header(r);
    writeln!(
        s,
        "{} cells, {} in E; |supp f| = {}, |supp g| = {}",
        p.cells, p.domain_cells, p.support_f, p.support_g
    )
    .unwrap();
    for l in &p.laws.laws {
        writeln!(s, "  {:<8} {}", l.law, if l.pass { "ok" } else { "FAIL" }).unwrap();
    }
    footer(&mut s, r);
    s
}
