//! Writer for the LP text format understood by common MILP engines.

use std::fmt::Write;

use super::{LinExpr, Model, Sense, VarType};

fn sanitize(name: &str, idx: usize) -> String {
    let cleaned: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    format!("x{idx}_{cleaned}")
}

/// Variable names as they appear in the written file, by variable index.
pub fn lp_names(model: &Model) -> Vec<String> {
    model.vars.iter().enumerate().map(|(i, v)| sanitize(&v.name, i)).collect()
}

fn write_expr(out: &mut String, e: &LinExpr, names: &[String]) {
    let e = e.compact();
    if e.terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names.first().cloned().unwrap_or_default());
        return;
    }
    for (v, c) in &e.terms {
        let _ = write!(out, " {} {:e} {}", if *c < 0.0 { '-' } else { '+' }, c.abs(), names[v.0]);
    }
}

pub fn write_lp(model: &Model) -> String {
    let names = lp_names(model);
    let mut out = String::from("\\ generated by dfmap\nMinimize\n obj:");
    if let Some(obj) = &model.objective {
        write_expr(&mut out, obj, &names);
        if obj.constant != 0.0 {
            let _ = write!(out, " + {:e}", obj.constant);
        }
    }
    out.push_str("\nSubject To\n");
    for (i, c) in model.constraints.iter().enumerate() {
        let _ = write!(out, " c{i}:");
        write_expr(&mut out, &c.expr, &names);
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {:e}", c.rhs - c.expr.constant);
    }
    out.push_str("Bounds\n");
    for (v, name) in model.vars.iter().zip(&names) {
        if v.ty == VarType::Bool {
            continue;
        }
        let lb = if v.lb.is_finite() { format!("{:e}", v.lb) } else { "-inf".into() };
        let ub = if v.ub.is_finite() { format!("{:e}", v.ub) } else { "+inf".into() };
        let _ = writeln!(out, " {lb} <= {name} <= {ub}");
    }
    let ints: Vec<&String> = model.vars.iter().zip(&names).filter(|(v, _)| v.ty == VarType::Int).map(|(_, n)| n).collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for n in ints {
            let _ = writeln!(out, " {n}");
        }
    }
    let bools: Vec<&String> = model.vars.iter().zip(&names).filter(|(v, _)| v.ty == VarType::Bool).map(|(_, n)| n).collect();
    if !bools.is_empty() {
        out.push_str("Binary\n");
        for n in bools {
            let _ = writeln!(out, " {n}");
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_names() {
        let mut m = Model::new();
        let x = m.bool_var("x");
        let k = m.int_var("k", 0, 4);
        let z = m.cont_var("z", 0.0, f64::INFINITY);
        m.le("cap", LinExpr::new().term(x, 2.0).term(k, 1.0), 3.0);
        m.ge("epi", LinExpr::from(z).term(k, -1.5), 0.0);
        m.minimize(z.into());
        let lp = write_lp(&m);
        for section in ["Minimize", "Subject To", "Bounds", "General", "Binary", "End"] {
            assert!(lp.contains(section), "{lp}");
        }
        assert!(lp.contains("x2_z <= +inf"));
        assert!(lp.contains("- 1.5e0 x1_k"));
    }
}
