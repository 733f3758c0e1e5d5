//! Tab-separated text record of a [`MixPlan`].

use crate::error::{Error, Result};
use crate::region_mix::{Center, MixPlan};

pub const PLAN_HEADER: &str = "delta\th\tw\tsource_i\tsource_j\ttarget_i\ttarget_j\tlambda_r\tlambda_a\tlambda";

/// Header line plus one value line; floats use shortest round-trip form.
pub fn format_plan(plan: &MixPlan) -> String {
    format!(
        "{}\n{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
        PLAN_HEADER,
        plan.delta,
        plan.h,
        plan.w,
        plan.source.i,
        plan.source.j,
        plan.target.i,
        plan.target.j,
        plan.lambda_r,
        plan.lambda_a,
        plan.lambda
    )
}

pub fn parse_plan(text: &str) -> Result<MixPlan> {
    let mut lines = text.split_inclusive('\n');
    let header = lines.next().unwrap_or("");
    if header.trim_end_matches(['\n', '\r']) != PLAN_HEADER {
        return Err(Error::parse(0, "missing plan header"));
    }
    let start = header.len();
    let line = lines.next().ok_or_else(|| Error::parse(start, "missing plan values"))?;
    let rest = start + line.len();
    if text[rest..].chars().any(|c| !c.is_whitespace()) {
        return Err(Error::parse(rest, "trailing data after plan record"));
    }
    let body = line.trim_end_matches(['\n', '\r']);
    let mut fields = Vec::with_capacity(10);
    let mut at = start;
    for f in body.split('\t') {
        fields.push((at, f));
        at += f.len() + 1;
    }
    if fields.len() != 10 {
        return Err(Error::parse(start, format!("expected 10 fields, found {}", fields.len())));
    }
    let float = |k: usize| -> Result<f64> {
        let (at, f) = fields[k];
        f.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(at, format!("'{}' is not a finite number", f)))
    };
    let int = |k: usize| -> Result<usize> {
        let (at, f) = fields[k];
        f.parse::<usize>()
            .map_err(|_| Error::parse(at, format!("'{}' is not a non-negative integer", f)))
    };
    Ok(MixPlan {
        delta: float(0)?,
        h: int(1)?,
        w: int(2)?,
        source: Center::new(int(3)?, int(4)?),
        target: Center::new(int(5)?, int(6)?),
        lambda_r: float(7)?,
        lambda_a: float(8)?,
        lambda: float(9)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> MixPlan {
        MixPlan {
            delta: 0.4375,
            h: 3,
            w: 5,
            source: Center::new(2, 3),
            target: Center::new(5, 4),
            lambda_r: 15.0 / 64.0,
            lambda_a: 0.1 + 0.2,
            lambda: 1.0 / 3.0,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        assert_eq!(parse_plan(&format_plan(&plan())).unwrap(), plan());
    }

    #[test]
    fn bad_fields_are_positioned() {
        let text = format_plan(&plan()).replace("\t3\t5\t", "\tx\t5\t");
        let at = PLAN_HEADER.len() + 1 + "0.4375\t".len();
        assert!(matches!(parse_plan(&text), Err(Error::Parse { offset, .. }) if offset == at));
        assert!(matches!(parse_plan("nope"), Err(Error::Parse { offset: 0, .. })));
        let short = format!("{}\n1\t2\n", PLAN_HEADER);
        assert!(parse_plan(&short).is_err());
        let extra = format!("{}junk", format_plan(&plan()));
        assert!(parse_plan(&extra).is_err());
    }
}
