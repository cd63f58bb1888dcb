//! Reference-based quality metrics and dataset evaluation.
//!
//! SSIM uses the common reference configuration: BT.601 luma of the stored
//! samples, an 11x11 Gaussian window with sigma 1.5, K1 = 0.01, K2 = 0.03,
//! dynamic range 1, averaged over the valid region.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::color::luma_bt601;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{list_images, read_image};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Mean squared error over all pixels and channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10 log10(peak^2 / MSE)` in dB; `f64::INFINITY` for identical images.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Valid-region separable filtering of a `h x w` field.
fn filter_valid(src: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, &kv)| kv * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, &kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM of the luma of `a` and `b`.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let (h, w) = (a.height(), a.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!("SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}")));
    }
    let (x, y) = (luma_bt601(a), luma_bt601(b));
    let k = gaussian_kernel();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(&x, h, w, &k);
    let my = filter_valid(&y, h, w, &k);
    let sxx = filter_valid(&xx, h, w, &k);
    let syy = filter_valid(&yy, h, w, &k);
    let sxy = filter_valid(&xy, h, w, &k);
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(&format_db(*v))
    }
}

fn format_db(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub id: String,
    #[serde(serialize_with = "ser_db")]
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub variant: Option<String>,
    pub rows: Vec<EvalRow>,
    #[serde(serialize_with = "ser_db")]
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
}

impl EvalReport {
    /// Sorts rows by id and computes the aggregate means.
    pub fn from_rows(mut rows: Vec<EvalRow>, variant: Option<String>) -> EvalReport {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let n = rows.len().max(1) as f64;
        let mean_psnr_db = if rows.is_empty() { f64::NAN } else { rows.iter().map(|r| r.psnr_db).sum::<f64>() / n };
        let mean_ssim = if rows.is_empty() { f64::NAN } else { rows.iter().map(|r| r.ssim).sum::<f64>() / n };
        EvalReport { variant, rows, mean_psnr_db, mean_ssim }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,psnr_db,ssim\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.6}", r.id, format_db(r.psnr_db), r.ssim);
        }
        s
    }

    /// Aggregate summary (without rows) as pretty JSON.
    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            variant: &'a Option<String>,
            count: usize,
            #[serde(serialize_with = "ser_db")]
            mean_psnr_db: f64,
            mean_ssim: f64,
        }
        let summary = Summary {
            variant: &self.variant,
            count: self.rows.len(),
            mean_psnr_db: self.mean_psnr_db,
            mean_ssim: self.mean_ssim,
        };
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    }

    /// Human-readable aligned table with a trailing mean row.
    pub fn to_table(&self) -> String {
        let width = self.rows.iter().map(|r| r.id.len()).max().unwrap_or(0).max(4);
        let mut s = format!("{:<width$}  {:>12}  {:>8}\n", "id", "psnr_db", "ssim");
        for r in &self.rows {
            let _ = writeln!(s, "{:<width$}  {:>12}  {:>8.4}", r.id, format_db(r.psnr_db), r.ssim);
        }
        let _ = writeln!(s, "{:<width$}  {:>12}  {:>8.4}", "mean", format_db(self.mean_psnr_db), self.mean_ssim);
        s
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        std::fs::write(&json, self.summary_json() + "\n").map_err(|e| Error::io(&json, e))?;
        Ok((csv, json))
    }
}

fn by_stem(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut map = BTreeMap::new();
    for p in list_images(dir)? {
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if let Some(prev) = map.insert(stem.clone(), p.clone()) {
            return Err(Error::invalid(format!(
                "{} and {} share the stem '{stem}'",
                prev.display(),
                p.display()
            )));
        }
    }
    Ok(map)
}

pub fn evaluate_pair(id: &str, pred: &Image, gt: &Image) -> Result<EvalRow> {
    Ok(EvalRow { id: id.to_string(), psnr_db: psnr(pred, gt, 1.0)?, ssim: ssim(pred, gt)? })
}

/// PSNR and SSIM for every image in `pred_dir` against the file with the
/// same stem in `gt_dir`.
pub fn evaluate_dataset(pred_dir: &Path, gt_dir: &Path, variant: Option<String>) -> Result<EvalReport> {
    let preds = by_stem(pred_dir)?;
    let gts = by_stem(gt_dir)?;
    if let Some(stem) = preds.keys().find(|k| !gts.contains_key(*k)) {
        return Err(Error::invalid(format!("no ground truth for '{stem}' in {}", gt_dir.display())));
    }
    if let Some(stem) = gts.keys().find(|k| !preds.contains_key(*k)) {
        return Err(Error::invalid(format!("no prediction for '{stem}' in {}", pred_dir.display())));
    }
    let items = preds.into_iter().map(|(stem, pred)| {
        let gt = gts[&stem].clone();
        (stem, pred, gt)
    });
    evaluate_files(items.collect(), variant)
}

/// Scores explicit `(id, prediction, ground truth)` file triples.
pub fn evaluate_files(items: Vec<(String, PathBuf, PathBuf)>, variant: Option<String>) -> Result<EvalReport> {
    let rows = items
        .par_iter()
        .map(|(id, pred, gt)| {
            let pred = read_image(pred)?;
            let gt = read_image(gt)?;
            evaluate_pair(id, &pred, &gt).map_err(|e| match e {
                Error::ShapeMismatch { expected, found } => Error::ShapeMismatch {
                    expected: format!("{expected} for '{id}'"),
                    found,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_rows(rows, variant))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorSpace;
    use crate::io::write_image;
    use crate::pattern::{random_image, Scene};
    use proptest::prelude::*;

    fn constant(h: usize, w: usize, v: f32) -> Image {
        Image::filled(h, w, ColorSpace::Srgb, &[v, v, v]).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let a = random_image(16, 16, 1);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let p = psnr(&constant(8, 8, 0.2), &constant(8, 8, 0.3), 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-5, "{p}");
        assert!(psnr(&a, &random_image(16, 17, 1), 1.0).is_err());
    }

    #[test]
    fn psnr_matches_direct_summation() {
        for seed in 0..20 {
            let a = random_image(13, 17, seed);
            let b = random_image(13, 17, seed + 100);
            let mut sum = 0.0f64;
            for c in 0..3 {
                for y in 0..13 {
                    for x in 0..17 {
                        sum += (a.get(y, x, c) as f64 - b.get(y, x, c) as f64).powi(2);
                    }
                }
            }
            let expected = 10.0 * (1.0 / (sum / (13.0 * 17.0 * 3.0))).log10();
            assert!((psnr(&a, &b, 1.0).unwrap() - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn ssim_examples() {
        let a = Scene::new(1).render(40, 50);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let c1 = SSIM_K1 * SSIM_K1;
        let c2 = SSIM_K2 * SSIM_K2;
        let analytic = (c1 * c2) / ((1.0 + c1) * c2);
        assert!((analytic - 9.999000099990002e-05).abs() < 1e-15);
        let s = ssim(&constant(20, 20, 0.0), &constant(20, 20, 1.0)).unwrap();
        assert!((s - analytic).abs() < 1e-6, "{s}");
        assert!(ssim(&constant(10, 20, 0.0), &constant(10, 20, 0.0)).is_err());
    }

    #[test]
    fn ssim_drops_with_noise() {
        let a = Scene::new(2).render(48, 48);
        let b = random_image(48, 48, 3);
        let s = ssim(&a, &b).unwrap();
        assert!(s < 0.5 && s > -1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn ssim_and_psnr_symmetric(s1 in 0u64..1000, s2 in 0u64..1000) {
            let a = random_image(16, 20, s1);
            let b = random_image(16, 20, s2 + 1000);
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
        }

        #[test]
        fn psnr_decreases_with_offset(d1 in 0.001f32..0.3, extra in 0.001f32..0.3) {
            let base = constant(4, 4, 0.1);
            let p1 = psnr(&base, &constant(4, 4, 0.1 + d1), 1.0).unwrap();
            let p2 = psnr(&base, &constant(4, 4, 0.1 + d1 + extra), 1.0).unwrap();
            prop_assert!(p2 < p1);
        }
    }

    fn write_set(dir: &Path, items: &[(&str, f32)]) {
        for (name, v) in items {
            write_image(dir.join(format!("{name}.rawf32")), &constant(16, 16, *v)).unwrap();
        }
    }

    #[test]
    fn dataset_offsets() {
        let pred = tempfile::tempdir().unwrap();
        let gt = tempfile::tempdir().unwrap();
        write_set(pred.path(), &[("b", 0.6), ("a", 0.51)]);
        write_set(gt.path(), &[("a", 0.5), ("b", 0.5)]);
        let r = evaluate_dataset(pred.path(), gt.path(), None).unwrap();
        assert_eq!(r.rows[0].id, "a");
        assert!((r.rows[0].psnr_db - 40.0).abs() < 1e-4);
        assert!((r.rows[1].psnr_db - 20.0).abs() < 1e-4);
        assert!((r.mean_psnr_db - 30.0).abs() < 1e-4);
        let again = evaluate_dataset(pred.path(), gt.path(), None).unwrap();
        assert_eq!(r.to_csv(), again.to_csv());
        assert_eq!(r.summary_json(), again.summary_json());
    }

    #[test]
    fn dataset_against_itself() {
        let dir = tempfile::tempdir().unwrap();
        write_set(dir.path(), &[("x", 0.3), ("y", 0.7)]);
        let r = evaluate_dataset(dir.path(), dir.path(), Some("identity".into())).unwrap();
        assert!(r.rows.iter().all(|row| row.psnr_db == f64::INFINITY && row.ssim == 1.0));
        assert_eq!(r.to_csv(), "id,psnr_db,ssim\nx,inf,1.000000\ny,inf,1.000000\n");
        assert!(r.summary_json().contains("\"mean_psnr_db\": \"inf\""));
    }

    #[test]
    fn dataset_missing_counterpart() {
        let pred = tempfile::tempdir().unwrap();
        let gt = tempfile::tempdir().unwrap();
        write_set(pred.path(), &[("a", 0.5), ("b", 0.5)]);
        write_set(gt.path(), &[("a", 0.5)]);
        assert!(evaluate_dataset(pred.path(), gt.path(), None).is_err());
    }

    #[test]
    fn report_independent_of_row_order() {
        let rows: Vec<EvalRow> = (0..7)
            .map(|i| EvalRow { id: format!("f{i}"), psnr_db: 20.0 + i as f64 * 1.37, ssim: 0.5 + i as f64 * 0.031 })
            .collect();
        let forward = EvalReport::from_rows(rows.clone(), None);
        let mut rev = rows.clone();
        rev.reverse();
        rev.swap(1, 4);
        assert_eq!(EvalReport::from_rows(rev, None), forward);
        let mean: f64 = rows.iter().map(|r| r.psnr_db).sum::<f64>() / 7.0;
        assert!((forward.mean_psnr_db - mean).abs() < 1e-9);
    }
}
