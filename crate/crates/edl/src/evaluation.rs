//! Uncertainty measurement protocols and their file formats.
//!
//! Everything here is pure over immutable prediction records: empirical
//! entropy CDFs, accuracy-versus-uncertainty-threshold curves, the
//! %-max-entropy summary, the rotating-digit sweep, and the
//! out-of-distribution protocol. CSV is the canonical output format;
//! the SVG plots are convenience renderings with no external assets.

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::NetworkParams;
use crate::numerics::Tensor;
use crate::opinions::entropy_of_slice;
use crate::training::{predict, predicted_class, Prediction};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// One evaluated sample. `true_label` is absent for out-of-distribution
/// inputs (their labels mean nothing to the evaluated model) and `u` is
/// absent for softmax models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub index: usize,
    pub true_label: Option<usize>,
    pub pred_label: usize,
    pub u: Option<f64>,
    /// Predictive entropy of p_hat, in [0, ln K].
    pub entropy: f64,
    pub p_hat: Vec<f64>,
}

impl ExperimentRecord {
    pub fn new(
        index: usize,
        true_label: Option<usize>,
        pred_label: usize,
        u: Option<f64>,
        entropy: f64,
        p_hat: Vec<f64>,
    ) -> Result<Self> {
        let k = p_hat.len();
        if k < 2 {
            return Err(Error::Shape(format!("p_hat needs ≥ 2 classes, got {k}")));
        }
        let max_h = (k as f64).ln();
        if !entropy.is_finite() || entropy < 0.0 || entropy > max_h + 1e-12 {
            return Err(Error::Domain(format!(
                "entropy {entropy} outside [0, ln {k}]"
            )));
        }
        if p_hat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("p_hat".into()));
        }
        if let Some(u) = u {
            if !u.is_finite() || !(0.0..=1.0).contains(&u) {
                return Err(Error::Domain(format!("u {u} outside [0,1]")));
            }
        }
        Ok(ExperimentRecord {
            index,
            true_label,
            pred_label,
            u,
            entropy,
            p_hat,
        })
    }

    fn class_count(&self) -> usize {
        self.p_hat.len()
    }
}

/// Turn a batch prediction into per-sample records. Pass labels for
/// in-distribution data; pass `None` for OOD inputs.
pub fn records_from_prediction(
    pred: &Prediction,
    labels: Option<&[usize]>,
) -> Result<Vec<ExperimentRecord>> {
    let (n, k) = pred.probs.dims2();
    if let Some(labels) = labels {
        if labels.len() != n {
            return Err(Error::Shape(format!(
                "{} labels for {n} predictions",
                labels.len()
            )));
        }
    }
    let max_h = (k as f64).ln();
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let p = pred.probs.row(i);
        let entropy = entropy_of_slice(p).min(max_h);
        records.push(ExperimentRecord::new(
            i,
            labels.map(|l| l[i]),
            predicted_class(p),
            pred.uncertainty.as_ref().map(|u| u[i]),
            entropy,
            p.to_vec(),
        )?);
    }
    Ok(records)
}

/// A named curve with strictly increasing x. `None` y values are gaps
/// (e.g. thresholds that reject every sample).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub name: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, Option<f64>)>,
}

impl CurveSeries {
    pub fn new(
        name: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
        points: Vec<(f64, Option<f64>)>,
    ) -> Result<Self> {
        for w in points.windows(2) {
            if !(w[0].0 < w[1].0) {
                return Err(Error::Domain(format!(
                    "x must be strictly increasing: {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        for &(x, y) in &points {
            if !x.is_finite() || y.is_some_and(|v| !v.is_finite()) {
                return Err(Error::NonFinite("curve point".into()));
            }
        }
        Ok(CurveSeries {
            name: name.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            points,
        })
    }
}

fn common_class_count(records: &[ExperimentRecord]) -> Result<usize> {
    let first = records
        .first()
        .ok_or_else(|| Error::Domain("empty record set".into()))?;
    let k = first.class_count();
    if records.iter().any(|r| r.class_count() != k) {
        return Err(Error::Shape("records disagree on class count".into()));
    }
    Ok(k)
}

/// Exact empirical CDF of predictive entropy: a step function sampled
/// at every distinct entropy value, pinned to the endpoints 0 and ln K.
pub fn entropy_cdf(records: &[ExperimentRecord], name: impl Into<String>) -> Result<CurveSeries> {
    let k = common_class_count(records)?;
    let max_h = (k as f64).ln();
    // Entropies within rounding error of an endpoint snap to it, so a
    // uniform prediction lands exactly on ln K and the corner shape
    // survives float noise.
    let mut values: Vec<f64> = records
        .iter()
        .map(|r| {
            let v = r.entropy.min(max_h);
            if v >= max_h - 1e-12 {
                max_h
            } else if v <= 1e-12 {
                0.0
            } else {
                v
            }
        })
        .collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len() as f64;

    let mut xs: Vec<f64> = Vec::with_capacity(values.len() + 2);
    xs.push(0.0);
    xs.extend_from_slice(&values);
    xs.push(max_h);
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();

    let points = xs
        .into_iter()
        .map(|x| {
            let below = values.partition_point(|&v| v <= x);
            (x, Some(below as f64 / n))
        })
        .collect();
    CurveSeries::new(name, "entropy (nats)", "empirical CDF", points)
}

/// Which per-sample score a threshold applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyScore {
    /// Dirichlet uncertainty mass u; evidence-head records only.
    EvidentialU,
    /// entropy / ln K, defined for every model family.
    NormalizedEntropy,
}

/// Accuracy over the samples whose uncertainty score is ≤ τ, per
/// threshold. Samples above the threshold count as rejected; a
/// threshold that rejects everything produces a gap.
pub fn threshold_accuracy_curve(
    records: &[ExperimentRecord],
    thresholds: &[f64],
    score: UncertaintyScore,
    name: impl Into<String>,
) -> Result<CurveSeries> {
    let k = common_class_count(records)?;
    let max_h = (k as f64).ln();
    if thresholds.is_empty() {
        return Err(Error::Domain("empty threshold list".into()));
    }
    let scored: Vec<(f64, bool)> = records
        .iter()
        .map(|r| {
            let s = match score {
                UncertaintyScore::EvidentialU => r
                    .u
                    .ok_or_else(|| Error::Domain(format!("record {} has no u", r.index))),
                UncertaintyScore::NormalizedEntropy => Ok(r.entropy / max_h),
            }?;
            let t = r.true_label.ok_or_else(|| {
                Error::Domain(format!("record {} has no true label", r.index))
            })?;
            Ok((s, r.pred_label == t))
        })
        .collect::<Result<_>>()?;
    let points = thresholds
        .iter()
        .map(|&tau| {
            let retained = scored.iter().filter(|(s, _)| *s <= tau);
            let (mut n, mut correct) = (0usize, 0usize);
            for (_, ok) in retained {
                n += 1;
                correct += *ok as usize;
            }
            let y = (n > 0).then(|| correct as f64 / n as f64);
            (tau, y)
        })
        .collect();
    CurveSeries::new(name, "uncertainty threshold", "accuracy", points)
}

/// Mean predictive entropy as a fraction of the maximum ln K.
pub fn max_entropy_ratio(records: &[ExperimentRecord]) -> Result<f64> {
    let k = common_class_count(records)?;
    let max_h = (k as f64).ln();
    let mean = records.iter().map(|r| r.entropy).sum::<f64>() / records.len() as f64;
    Ok(mean / max_h)
}

/// Rotate a square image about its center by `angle_degrees` with
/// bilinear interpolation and zero padding. 0° is the exact identity.
pub fn rotate_image(image: &[f64], side: usize, angle_degrees: f64) -> Vec<f64> {
    assert_eq!(image.len(), side * side, "image is not side×side");
    let theta = angle_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let c = (side as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for col in 0..side {
            let dy = r as f64 - c;
            let dx = col as f64 - c;
            // Inverse map: sample the source pixel that lands here.
            let sx = c + cos * dx + sin * dy;
            let sy = c - sin * dx + cos * dy;
            let x0 = sx.floor();
            let y0 = sy.floor();
            let fx = sx - x0;
            let fy = sy - y0;
            let mut acc = 0.0;
            for (oy, wy) in [(0i64, 1.0 - fy), (1, fy)] {
                for (ox, wx) in [(0i64, 1.0 - fx), (1, fx)] {
                    let w = wy * wx;
                    if w == 0.0 {
                        continue;
                    }
                    let px = x0 as i64 + ox;
                    let py = y0 as i64 + oy;
                    if (0..side as i64).contains(&px) && (0..side as i64).contains(&py) {
                        acc += w * image[py as usize * side + px as usize];
                    }
                }
            }
            out[r * side + col] = acc;
        }
    }
    out
}

/// Prediction under rotation, one point per angle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationPoint {
    pub angle: f64,
    pub pred_label: usize,
    pub u: Option<f64>,
    pub entropy: f64,
    pub p_hat: Vec<f64>,
}

/// Rotate one image through `angles` (degrees) and predict each
/// rotation. The image must be square.
pub fn rotation_sweep(
    params: &NetworkParams,
    image: &[f64],
    angles: &[f64],
) -> Result<Vec<RotationPoint>> {
    let d = params.input_dim();
    if image.len() != d {
        return Err(Error::Shape(format!(
            "image has {} pixels, network expects {d}",
            image.len()
        )));
    }
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::Shape(format!("image with {d} pixels is not square")));
    }
    if angles.is_empty() {
        return Err(Error::Domain("empty angle list".into()));
    }
    let k = params.class_count();
    let max_h = (k as f64).ln();
    let mut out = Vec::with_capacity(angles.len());
    for &angle in angles {
        let rotated = rotate_image(image, side, angle);
        let x = Tensor::from_vec(&[1, d], rotated)?;
        let pred = predict(params, &x)?;
        let p = pred.probs.row(0);
        out.push(RotationPoint {
            angle,
            pred_label: predicted_class(p),
            u: pred.uncertainty.as_ref().map(|u| u[0]),
            entropy: entropy_of_slice(p).min(max_h),
            p_hat: p.to_vec(),
        });
    }
    Ok(out)
}

/// Evaluate a model on data it was not trained on. The records carry no
/// true labels (an OOD input has no valid class under this model), just
/// predictions and uncertainty, plus the entropy CDF for comparison
/// against an in-distribution CDF from the same model.
pub fn ood_experiment(
    params: &NetworkParams,
    dataset: &LabeledDataset,
) -> Result<(Vec<ExperimentRecord>, CurveSeries)> {
    let pred = predict(params, &dataset.features)?;
    let records = records_from_prediction(&pred, None)?;
    let cdf = entropy_cdf(&records, "ood")?;
    Ok((records, cdf))
}

fn fmt_opt_usize(v: Option<usize>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Records as CSV: `index,true_label,pred_label,u,entropy,p_hat_*`.
/// Absent fields are empty. A leading comment line records provenance;
/// pass only stable strings (no timestamps) so identical runs emit
/// identical bytes.
pub fn records_csv(records: &[ExperimentRecord], provenance: &str) -> Result<String> {
    let k = common_class_count(records)?;
    let mut out = String::new();
    if !provenance.is_empty() {
        let _ = writeln!(out, "# {provenance}");
    }
    out.push_str("index,true_label,pred_label,u,entropy");
    for j in 0..k {
        let _ = write!(out, ",p_hat_{j}");
    }
    out.push('\n');
    for r in records {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            r.index,
            fmt_opt_usize(r.true_label),
            r.pred_label,
            fmt_opt_f64(r.u),
            r.entropy
        );
        for &p in &r.p_hat {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Rotation sweep as CSV: `angle,pred_label,u,entropy,p_hat_*`.
pub fn rotation_csv(points: &[RotationPoint], provenance: &str) -> Result<String> {
    let first = points
        .first()
        .ok_or_else(|| Error::Domain("empty rotation sweep".into()))?;
    let k = first.p_hat.len();
    let mut out = String::new();
    if !provenance.is_empty() {
        let _ = writeln!(out, "# {provenance}");
    }
    out.push_str("angle,pred_label,u,entropy");
    for j in 0..k {
        let _ = write!(out, ",p_hat_{j}");
    }
    out.push('\n');
    for p in points {
        let _ = write!(
            out,
            "{},{},{},{}",
            p.angle,
            p.pred_label,
            fmt_opt_f64(p.u),
            p.entropy
        );
        for &v in &p.p_hat {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    Ok(out)
}

/// One curve as CSV with its axis labels as the header.
pub fn curve_csv(series: &CurveSeries, provenance: &str) -> String {
    let mut out = String::new();
    if !provenance.is_empty() {
        let _ = writeln!(out, "# {provenance}");
    }
    let _ = writeln!(out, "{},{}", series.x_label, series.y_label);
    for &(x, y) in &series.points {
        let _ = writeln!(out, "{x},{}", fmt_opt_f64(y));
    }
    out
}

const SVG_COLORS: [&str; 6] = ["#1f6fb2", "#c4452c", "#2e8540", "#8250c4", "#b0842a", "#3a3a3a"];
const SVG_W: f64 = 640.0;
const SVG_H: f64 = 420.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 18.0;
const MARGIN_T: f64 = 34.0;
const MARGIN_B: f64 = 48.0;

/// Render curves as a standalone SVG line plot: axes, ticks, a legend,
/// one polyline per gap-free run of each series. No external assets and
/// no timestamps, so output bytes depend only on the input.
pub fn curves_svg(series: &[&CurveSeries], title: &str) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Domain("no series to plot".into()));
    }
    let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            xmin = xmin.min(x);
            xmax = xmax.max(x);
            if let Some(y) = y {
                ymin = ymin.min(y);
                ymax = ymax.max(y);
            }
        }
    }
    if !xmin.is_finite() {
        return Err(Error::Domain("no points to plot".into()));
    }
    if !ymin.is_finite() {
        (ymin, ymax) = (0.0, 1.0);
    }
    if xmax - xmin < 1e-12 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-12 {
        ymax = ymin + 1.0;
    }
    let plot_w = SVG_W - MARGIN_L - MARGIN_R;
    let plot_h = SVG_H - MARGIN_T - MARGIN_B;
    let px = |x: f64| MARGIN_L + (x - xmin) / (xmax - xmin) * plot_w;
    let py = |y: f64| MARGIN_T + (1.0 - (y - ymin) / (ymax - ymin)) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{SVG_W}" height="{SVG_H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        xml_escape(title)
    );
    // Axes.
    let (x0, y0) = (MARGIN_L, MARGIN_T + plot_h);
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="black"/>"#,
        MARGIN_L + plot_w
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{MARGIN_T:.2}" stroke="black"/>"#
    );
    // Ticks at the extremes and midpoints.
    for t in [0.0, 0.5, 1.0] {
        let xv = xmin + t * (xmax - xmin);
        let yv = ymin + t * (ymax - ymin);
        let _ = writeln!(
            out,
            r#"<line x1="{0:.2}" y1="{y0:.2}" x2="{0:.2}" y2="{1:.2}" stroke="black"/>"#,
            px(xv),
            y0 + 5.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(xv),
            y0 + 20.0,
            fmt_tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{1:.2}" x2="{x0:.2}" y2="{1:.2}" stroke="black"/>"#,
            x0 - 5.0,
            py(yv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 8.0,
            py(yv) + 4.0,
            fmt_tick(yv)
        );
    }
    // Axis labels from the first series.
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_L + plot_w / 2.0,
        SVG_H - 10.0,
        xml_escape(&series[0].x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {0:.2})">{1}</text>"#,
        MARGIN_T + plot_h / 2.0,
        xml_escape(&series[0].y_label)
    );
    // Series.
    for (si, s) in series.iter().enumerate() {
        let color = SVG_COLORS[si % SVG_COLORS.len()];
        let mut run: Vec<String> = Vec::new();
        let flush = |run: &mut Vec<String>, out: &mut String| {
            if run.len() >= 2 {
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                    run.join(" ")
                );
            } else if run.len() == 1 {
                let xy: Vec<&str> = run[0].split(',').collect();
                let _ = writeln!(
                    out,
                    r#"<circle cx="{}" cy="{}" r="2.5" fill="{color}"/>"#,
                    xy[0], xy[1]
                );
            }
            run.clear();
        };
        for &(x, y) in &s.points {
            match y {
                Some(y) => run.push(format!("{:.2},{:.2}", px(x), py(y))),
                None => flush(&mut run, &mut out),
            }
        }
        flush(&mut run, &mut out);
        // Legend entry.
        let ly = MARGIN_T + 8.0 + 16.0 * si as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"/>"#,
            MARGIN_L + plot_w - 120.0,
            MARGIN_L + plot_w - 96.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            MARGIN_L + plot_w - 90.0,
            ly + 4.0,
            xml_escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn fmt_tick(v: f64) -> String {
    if v == v.round() && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else {
        format!("{v:.3}")
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
