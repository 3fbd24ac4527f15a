//! CPLEX LP text output, for cross-checking programs with external solvers.

use std::fmt::Write;

use crate::model::{LinearProgram, Relation};

fn sanitize(name: &str, fallback: &str) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("{fallback}_{s}")
    } else {
        s
    }
}

fn term(out: &mut String, coef: f64, name: &str, first: bool) {
    if coef < 0.0 {
        let _ = write!(out, " - {} {}", -coef, name);
    } else if first {
        let _ = write!(out, " {coef} {name}");
    } else {
        let _ = write!(out, " + {coef} {name}");
    }
}

/// Renders `lp` in LP format. SOS1 pairs go to an `SOS` section.
pub fn write_lp(lp: &LinearProgram) -> String {
    let names: Vec<String> = lp
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| format!("{}_{j}", sanitize(&v.name, "x")))
        .collect();
    let mut out = String::from("\\ objective offset ");
    let _ = writeln!(out, "{}", lp.objective_offset);
    out.push_str("Minimize\n obj:");
    let mut first = true;
    for (j, &c) in lp.objective.iter().enumerate() {
        if c != 0.0 {
            term(&mut out, c, &names[j], first);
            first = false;
        }
    }
    if first {
        out.push_str(" 0");
    }
    out.push_str("\nSubject To\n");
    for (i, c) in lp.constraints.iter().enumerate() {
        let _ = write!(out, " {}_{i}:", sanitize(&c.name, "c"));
        let mut first = true;
        for &(v, a) in &c.coeffs {
            term(&mut out, a, &names[v.0], first);
            first = false;
        }
        if first {
            out.push_str(" 0 x_empty");
        }
        let rel = match c.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {rel} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (j, v) in lp.variables.iter().enumerate() {
        let lo = if v.lower == f64::NEG_INFINITY { "-inf".to_string() } else { v.lower.to_string() };
        let hi = if v.upper == f64::INFINITY { "+inf".to_string() } else { v.upper.to_string() };
        let _ = writeln!(out, " {lo} <= {} <= {hi}", names[j]);
    }
    let bins: Vec<&str> = lp
        .variables
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.is_binary)
        .map(|(_, n)| n.as_str())
        .collect();
    if !bins.is_empty() {
        out.push_str("Binaries\n");
        for b in bins {
            let _ = writeln!(out, " {b}");
        }
    }
    if !lp.sos1.is_empty() {
        out.push_str("SOS\n");
        for (k, &(a, b)) in lp.sos1.iter().enumerate() {
            let _ = writeln!(out, " s{k}: S1:: {}:1 {}:2", names[a.0], names[b.0]);
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_all_sections() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var("x", 0.0, f64::INFINITY);
        let y = lp.add_var("y flow", f64::NEG_INFINITY, 4.0);
        let z = lp.add_binary("z");
        lp.set_cost(x, 1.5);
        lp.set_cost(y, -2.0);
        lp.add_constraint("cap", vec![(x, 1.0), (y, -1.0)], Relation::Le, 3.0);
        lp.add_sos1(x, y);
        let _ = z;
        let text = write_lp(&lp);
        assert!(text.contains("Minimize\n obj: 1.5 x_0 - 2 y_flow_1"));
        assert!(text.contains(" cap_0: 1 x_0 - 1 y_flow_1 <= 3"));
        assert!(text.contains(" -inf <= y_flow_1 <= 4"));
        assert!(text.contains("Binaries\n z_2"));
        assert!(text.contains("S1:: x_0:1 y_flow_1:2"));
        assert!(text.ends_with("End\n"));
    }
}
