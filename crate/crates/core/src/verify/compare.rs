use std::io::Write;
use std::time::Instant;

use rand::{Rng as _, SeedableRng};
use serde::Serialize;

use super::{formal_violation, VerificationResult};
use crate::mlp::Mlp;
use crate::properties::{property_violation, PropertySet};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorColumn {
    pub m: usize,
    pub value: f64,
    pub seconds: f64,
}

/// Formal bracket and Monte Carlo estimates of one property's violation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub property: String,
    pub formal: VerificationResult,
    pub estimates: Vec<EstimatorColumn>,
}

/// Run the verifier and the estimator at every `m` on each property of `props`.
pub fn compare_estimator(
    net: &Mlp,
    props: &PropertySet,
    m_values: &[usize],
    gap: f64,
    max_boxes: usize,
    rng: &mut Rng,
) -> Result<Vec<ComparisonRow>> {
    if props.is_empty() {
        return Err(Error::invalid("property set is empty"));
    }
    if m_values.is_empty() {
        return Err(Error::invalid("no sample sizes given"));
    }
    let mut rows = Vec::with_capacity(props.len());
    for (i, p) in props.iter().enumerate() {
        let mut estimates = Vec::with_capacity(m_values.len());
        for &m in m_values {
            let mut sub = Rng::seed_from_u64(rng.random());
            let t = Instant::now();
            let value = property_violation(net, p, m, &mut sub)?;
            estimates.push(EstimatorColumn { m, value, seconds: t.elapsed().as_secs_f64() });
        }
        let formal = formal_violation(net, p, gap, max_boxes)?;
        rows.push(ComparisonRow { property: p.label(i), formal, estimates });
    }
    Ok(rows)
}

/// One CSV line per row. All rows must share the same `m` columns.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let ms: Vec<usize> = rows.first().map(|r| r.estimates.iter().map(|e| e.m).collect()).unwrap_or_default();
    let mut header: Vec<String> = [
        "property",
        "formal_lower",
        "formal_upper",
        "formal_mid",
        "formal_seconds",
        "boxes",
        "budget_exhausted",
        "degenerate_boxes",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for m in &ms {
        header.push(format!("est_{m}"));
        header.push(format!("est_{m}_seconds"));
    }
    w.write_record(&header)?;
    for r in rows {
        if r.estimates.iter().map(|e| e.m).ne(ms.iter().copied()) {
            return Err(Error::invalid("comparison rows have different sample sizes"));
        }
        let f = &r.formal;
        let mut rec = vec![
            r.property.clone(),
            f.violation_lower.to_string(),
            f.violation_upper.to_string(),
            f.midpoint().to_string(),
            f.elapsed.to_string(),
            f.boxes_explored.to_string(),
            f.budget_exhausted.to_string(),
            f.degenerate_boxes.to_string(),
        ];
        for e in &r.estimates {
            rec.push(e.value.to_string());
            rec.push(e.seconds.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpSpec;
    use crate::properties::navigation_property_set;
    use crate::rng_from_seed;

    #[test]
    fn table_layout() {
        let mut rng = rng_from_seed(0);
        let net = Mlp::new(MlpSpec::actor(5), &mut rng).unwrap();
        let rows = compare_estimator(&net, &navigation_property_set(), &[100, 1000, 10000], 0.005, 200, &mut rng).unwrap();
        assert_eq!(rows.len(), 3);
        for r in &rows {
            assert_eq!(r.estimates.iter().map(|e| e.m).collect::<Vec<_>>(), vec![100, 1000, 10000]);
            assert!(r.estimates.iter().all(|e| (0.0..=1.0).contains(&e.value)));
            assert!(r.formal.violation_lower <= r.formal.violation_upper);
        }
        let mut buf = Vec::new();
        write_comparison_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].ends_with("est_10000,est_10000_seconds"));
        assert!(lines[1].starts_with("p_front,"));
    }

    #[test]
    fn empty_inputs_rejected() {
        let mut rng = rng_from_seed(0);
        let net = Mlp::new(MlpSpec::actor(5), &mut rng).unwrap();
        assert!(compare_estimator(&net, &PropertySet::default(), &[10], 0.1, 10, &mut rng).is_err());
        assert!(compare_estimator(&net, &navigation_property_set(), &[], 0.1, 10, &mut rng).is_err());
    }
}
