use crate::error::{invalid, Result};
use crate::field::{FlowField, Plane};

use super::FlowFileRecord;

/// Outlier criterion for the error rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorRateMode {
    /// Erroneous iff EPE > 3 px and EPE > 5% of the true length (KITTI devkit).
    #[default]
    Conjunction,
    /// Erroneous iff EPE > 3 px or EPE > 5% of the true length.
    Disjunction,
}

impl ErrorRateMode {
    pub fn is_outlier(self, epe: f64, gt_norm: f64) -> bool {
        let abs = epe > 3.0;
        let rel = epe > 0.05 * gt_norm;
        match self {
            Self::Conjunction => abs && rel,
            Self::Disjunction => abs || rel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    /// Mean endpoint error over valid pixels.
    pub epe: f64,
    /// Mean endpoint error over valid, non-occluded pixels; `None` without any.
    pub epe_noc: Option<f64>,
    /// Percentage of valid pixels that are outliers.
    pub error_rate: f64,
    pub count_all: usize,
    pub count_valid: usize,
    pub count_noc: usize,
}

impl EvalStats {
    /// Pixel-weighted combination of per-item statistics.
    pub fn aggregate(items: &[EvalStats]) -> Option<EvalStats> {
        let valid: usize = items.iter().map(|s| s.count_valid).sum();
        if valid == 0 {
            return None;
        }
        let noc: usize = items.iter().map(|s| s.count_noc).sum();
        let sum = |f: &dyn Fn(&EvalStats) -> f64| items.iter().map(f).sum::<f64>();
        Some(EvalStats {
            epe: sum(&|s| s.epe * s.count_valid as f64) / valid as f64,
            epe_noc: (noc > 0)
                .then(|| sum(&|s| s.epe_noc.unwrap_or(0.0) * s.count_noc as f64) / noc as f64),
            error_rate: sum(&|s| s.error_rate * s.count_valid as f64) / valid as f64,
            count_all: items.iter().map(|s| s.count_all).sum(),
            count_valid: valid,
            count_noc: noc,
        })
    }
}

fn check(pred: &FlowField, gt: &FlowFileRecord, noc: Option<&Plane>) -> Result<()> {
    let (h, w) = (gt.flow.height(), gt.flow.width());
    if !pred.same_dims(h, w) {
        return invalid(format!(
            "prediction is {}x{}, ground truth {h}x{w}",
            pred.height(),
            pred.width()
        ));
    }
    if !gt.valid.same_dims(h, w) || noc.is_some_and(|m| !m.same_dims(h, w)) {
        return invalid("masks must match the ground-truth dimensions");
    }
    Ok(())
}

fn endpoint(pred: &FlowField, gt: &FlowField, i: usize) -> (f64, f64) {
    let (p, g) = (pred.as_slice(), gt.as_slice());
    let (du, dv) = (p[2 * i] - g[2 * i], p[2 * i + 1] - g[2 * i + 1]);
    (du.hypot(dv), g[2 * i].hypot(g[2 * i + 1]))
}

/// Endpoint error statistics; outliers use `mode`. A pixel is valid when
/// its ground-truth validity is at least 0.5 and non-occluded when `noc` is
/// too.
pub fn evaluate(
    pred: &FlowField,
    gt: &FlowFileRecord,
    noc: Option<&Plane>,
    mode: ErrorRateMode,
) -> Result<EvalStats> {
    check(pred, gt, noc)?;
    let n = gt.valid.data.len();
    let (mut sum, mut sum_noc, mut outliers) = (0.0, 0.0, 0usize);
    let (mut valid, mut count_noc) = (0usize, 0usize);
    for i in 0..n {
        if gt.valid.data[i] < 0.5 {
            continue;
        }
        let (e, g) = endpoint(pred, &gt.flow, i);
        sum += e;
        valid += 1;
        outliers += mode.is_outlier(e, g) as usize;
        if noc.is_none_or(|m| m.data[i] >= 0.5) {
            sum_noc += e;
            count_noc += 1;
        }
    }
    if valid == 0 {
        return invalid("ground truth has no valid pixels");
    }
    Ok(EvalStats {
        epe: sum / valid as f64,
        epe_noc: (count_noc > 0).then(|| sum_noc / count_noc as f64),
        error_rate: 100.0 * outliers as f64 / valid as f64,
        count_all: n,
        count_valid: valid,
        count_noc,
    })
}

/// [`evaluate`] with the default (conjunction) outlier rule.
pub fn epe(pred: &FlowField, gt: &FlowFileRecord, noc: Option<&Plane>) -> Result<EvalStats> {
    evaluate(pred, gt, noc, ErrorRateMode::Conjunction)
}

/// Outlier percentage over valid pixels.
pub fn error_rate(pred: &FlowField, gt: &FlowFileRecord, mode: ErrorRateMode) -> Result<f64> {
    evaluate(pred, gt, None, mode).map(|s| s.error_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowkit::FlowFormat;

    fn rec(flow: FlowField) -> FlowFileRecord {
        let (h, w) = (flow.height(), flow.width());
        FlowFileRecord {
            flow,
            valid: Plane::filled(h, w, 1.0),
            format: FlowFormat::Flo,
        }
    }

    #[test]
    fn perfect_prediction() {
        let gt = FlowField::from_fn(4, 4, |y, x| (x as f64, y as f64 * 3.0));
        let s = epe(&gt, &rec(gt.clone()), None).unwrap();
        assert_eq!(s.epe, 0.0);
        assert_eq!(s.error_rate, 0.0);
        assert_eq!(error_rate(&gt, &rec(gt.clone()), ErrorRateMode::Disjunction).unwrap(), 0.0);
    }

    #[test]
    fn three_four_five() {
        let gt = FlowField::constant(3, 5, 1.0, 2.0);
        let pred = FlowField::constant(3, 5, 4.0, 6.0);
        assert_eq!(epe(&pred, &rec(gt), None).unwrap().epe, 5.0);
    }

    #[test]
    fn half_and_half() {
        let gt = FlowField::zeros(2, 2);
        let pred = FlowField::from_fn(2, 2, |y, _| if y == 0 { (2.0, 0.0) } else { (0.0, 4.0) });
        assert_eq!(epe(&pred, &rec(gt), None).unwrap().epe, 3.0);
    }

    #[test]
    fn conjunction_versus_disjunction() {
        let gt = FlowField::constant(1, 1, 100.0, 0.0);
        let pred = FlowField::constant(1, 1, 105.0, 0.0);
        assert_eq!(error_rate(&pred, &rec(gt.clone()), ErrorRateMode::Conjunction).unwrap(), 0.0);
        assert_eq!(error_rate(&pred, &rec(gt), ErrorRateMode::Disjunction).unwrap(), 100.0);
        let gt = FlowField::constant(1, 1, 10.0, 0.0);
        let pred = FlowField::constant(1, 1, 20.0, 0.0);
        for mode in [ErrorRateMode::Conjunction, ErrorRateMode::Disjunction] {
            assert_eq!(error_rate(&pred, &rec(gt.clone()), mode).unwrap(), 100.0);
        }
    }

    #[test]
    fn masks_restrict_pixels() {
        let gt = FlowField::zeros(1, 4);
        let pred = FlowField::from_fn(1, 4, |_, x| (x as f64, 0.0));
        let mut r = rec(gt);
        r.valid.data[0] = 0.0;
        let noc = Plane::from_fn(1, 4, |_, x| (x >= 2) as u8 as f64);
        let s = epe(&pred, &r, Some(&noc)).unwrap();
        assert_eq!(s.epe, 2.0);
        assert_eq!(s.epe_noc, Some(2.5));
        assert_eq!((s.count_all, s.count_valid, s.count_noc), (4, 3, 2));
        assert!(epe(&FlowField::zeros(2, 2), &r, None).is_err());
    }
}
