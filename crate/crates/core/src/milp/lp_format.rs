use std::io::{self, Write};

use super::{LinExpr, Model, Sense, VarKind};

pub(super) fn write<W: Write>(model: &Model, w: &mut W) -> io::Result<()> {
    writeln!(w, "\\ {}", model.name)?;
    writeln!(
        w,
        "{}",
        match model.sense() {
            Sense::Minimize => "Minimize",
            Sense::Maximize => "Maximize",
        }
    )?;
    write!(w, " obj:")?;
    write_expr(model, model.objective(), w)?;
    let k = model.objective().constant_term();
    if k != 0.0 {
        write!(
            w,
            " {} {}",
            if k < 0.0 { "-" } else { "+" },
            fmt_num(k.abs())
        )?;
    }
    writeln!(w)?;

    writeln!(w, "Subject To")?;
    for row in model.constraints() {
        write!(w, " {}:", row.name)?;
        write_expr(model, &row.expr, w)?;
        writeln!(
            w,
            " {} {}",
            row.cmp.symbol(),
            fmt_num(row.rhs - row.expr.constant_term())
        )?;
    }
    for ind in model.indicators() {
        write!(
            w,
            " {}: {} = {} ->",
            ind.name,
            model.var(ind.binary).name,
            u8::from(ind.active_when)
        )?;
        write_expr(model, &ind.expr, w)?;
        writeln!(
            w,
            " {} {}",
            ind.cmp.symbol(),
            fmt_num(ind.rhs - ind.expr.constant_term())
        )?;
    }

    writeln!(w, "Bounds")?;
    for def in model.vars() {
        if def.kind == VarKind::Binary {
            continue;
        }
        match (def.lower.is_finite(), def.upper.is_finite()) {
            (true, true) if def.lower == def.upper => {
                writeln!(w, " {} = {}", def.name, fmt_num(def.lower))?
            }
            (true, true) => writeln!(
                w,
                " {} <= {} <= {}",
                fmt_num(def.lower),
                def.name,
                fmt_num(def.upper)
            )?,
            (true, false) => writeln!(w, " {} >= {}", def.name, fmt_num(def.lower))?,
            (false, true) => writeln!(w, " -inf <= {} <= {}", def.name, fmt_num(def.upper))?,
            (false, false) => writeln!(w, " {} free", def.name)?,
        }
    }

    let binaries: Vec<_> = model
        .vars()
        .iter()
        .filter(|d| d.kind == VarKind::Binary)
        .collect();
    if !binaries.is_empty() {
        writeln!(w, "Binaries")?;
        for def in binaries {
            writeln!(w, " {}", def.name)?;
        }
    }
    writeln!(w, "End")
}

fn write_expr<W: Write>(model: &Model, expr: &LinExpr, w: &mut W) -> io::Result<()> {
    let terms = expr.merged_terms();
    if terms.is_empty() {
        return write!(w, " 0 {}", model.vars().first().map_or("x0", |d| &d.name));
    }
    for (v, c) in terms {
        let sign = if c < 0.0 { "-" } else { "+" };
        write!(w, " {} {} {}", sign, fmt_num(c.abs()), model.var(v).name)?;
    }
    Ok(())
}

fn fmt_num(x: f64) -> String {
    // Shortest representation that round-trips.
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use crate::milp::{Cmp, LinExpr, Model, Sense};

    #[test]
    fn lp_text_layout() {
        let mut m = Model::new("demo");
        let x = m.add_continuous("x", 0.0, 4.0);
        let z = m.add_binary("z");
        m.add_constraint(
            "c1",
            LinExpr::new().with(x, 1.0).with(z, -2.0),
            Cmp::Le,
            1.0,
        );
        m.add_indicator("i1", z, true, LinExpr::from(x), Cmp::Eq, 0.5);
        m.set_objective(Sense::Maximize, LinExpr::new().with(x, 3.0));
        let mut buf = Vec::new();
        m.write_lp(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("Maximize\n obj: + 3.0 x\n"));
        assert!(text.contains(" c1: + 1.0 x - 2.0 z <= 1.0\n"));
        assert!(text.contains(" i1: z = 1 -> + 1.0 x = 0.5\n"));
        assert!(text.contains(" 0.0 <= x <= 4.0\n"));
        assert!(text.contains("Binaries\n z\nEnd"));
    }
}
