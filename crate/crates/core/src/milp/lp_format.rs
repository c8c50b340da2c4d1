//! CPLEX-style LP text export.

use std::fmt::Write;

use super::{LinearModel, Relation, VarId, VarKind};

const TERMS_PER_LINE: usize = 6;

fn push_terms(out: &mut String, model: &LinearModel, terms: &[(VarId, f64)]) {
    if terms.is_empty() {
        // A bare zero keeps empty rows parseable.
        out.push_str(" 0 ");
        out.push_str(&model.variables()[0].name);
        return;
    }
    for (k, (v, c)) in terms.iter().enumerate() {
        if k > 0 && k % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if *c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {} {}", c.abs(), model.variable(*v).name);
    }
}

fn number(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

/// Renders `model` in LP format. Equal models produce byte-identical text.
pub fn export_lp(model: &LinearModel) -> String {
    let mut out = String::from("\\ ies-dispatch model\nMinimize\n obj:");
    let obj = model.objective().merged_terms();
    if model.variables().is_empty() {
        out.push_str(" 0");
    } else {
        push_terms(&mut out, model, &obj);
    }
    let constant = model.objective().constant_part();
    if constant != 0.0 {
        let sign = if constant < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {}", constant.abs());
    }
    out.push_str("\nSubject To\n");
    for c in model.constraints() {
        if model.variables().is_empty() {
            break;
        }
        let _ = write!(out, " {}:", c.label);
        push_terms(&mut out, model, &c.terms);
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {rel} {}", number(c.rhs));
    }
    out.push_str("Bounds\n");
    for v in model.variables() {
        if v.kind == VarKind::Binary && v.lower == 0.0 && v.upper == 1.0 {
            continue;
        }
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {} free", v.name);
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", number(v.lower), v.name, number(v.upper));
        }
    }
    let binaries: Vec<&str> = model
        .variables()
        .iter()
        .filter(|v| v.kind == VarKind::Binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(TERMS_PER_LINE) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}
