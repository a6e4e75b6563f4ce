//! Alignment and density scores of layouts, and cross-method comparison.
//!
//! Coordinates are normalized by page width (x) and height (y). For every
//! element the alignment term is `g(Δ) = -ln(1 - Δ)` of its smallest gap to
//! any other element over six channels (left, center and right edges in x;
//! top, center and bottom in y); gaps are clamped to `[0, 1 - 1e-6]`.
//! Density is the plain sum of element areas over the page area.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{Layout, PageSpec};

pub const DELTA_CLAMP: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub align_sum: f64,
    pub align_mean: f64,
    pub density: f64,
    /// Union area over page area; equals `density` for overlap-free layouts.
    pub density_union: f64,
    pub n_elements: usize,
}

fn g(delta: f64) -> f64 {
    -(1.0 - delta.clamp(0.0, DELTA_CLAMP)).ln()
}

fn channels(layout: &Layout) -> Vec<[f64; 6]> {
    let (pw, ph) = (
        f64::from(layout.page.width_px),
        f64::from(layout.page.height_px),
    );
    layout
        .placed
        .iter()
        .map(|p| {
            let (x, y, w, h) = (
                f64::from(p.x) / pw,
                f64::from(p.y) / ph,
                f64::from(p.w) / pw,
                f64::from(p.h) / ph,
            );
            [x, x + w / 2.0, x + w, y, y + h / 2.0, y + h]
        })
        .collect()
}

/// `(align_sum, align_mean)`. Single-element layouts score zero.
pub fn align_score(layout: &Layout) -> Result<(f64, f64)> {
    let n = layout.placed.len();
    if n == 0 {
        return Err(Error::Metrics("alignment of an empty layout is undefined".into()));
    }
    if n == 1 {
        return Ok((0.0, 0.0));
    }
    let ch = channels(layout);
    let mut sum = 0.0;
    for (i, a) in ch.iter().enumerate() {
        let mut best = f64::INFINITY;
        for k in 0..6 {
            let gap = ch
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, b)| (a[k] - b[k]).abs())
                .fold(f64::INFINITY, f64::min);
            best = best.min(gap);
        }
        // g is increasing, so the minimum over channels of g(Δ) is g(min Δ).
        sum += g(best);
    }
    Ok((sum, sum / n as f64))
}

pub fn density_score(layout: &Layout) -> f64 {
    let filled: u64 = layout.placed.iter().map(|p| p.area()).sum();
    filled as f64 / layout.page.area() as f64
}

/// Area of the union of element boxes over page area.
pub fn density_union(layout: &Layout) -> f64 {
    let mut xs: Vec<u32> = layout
        .placed
        .iter()
        .flat_map(|p| [p.x, p.x + p.w])
        .collect();
    xs.sort_unstable();
    xs.dedup();
    let mut covered = 0u64;
    for win in xs.windows(2) {
        let (x0, x1) = (win[0], win[1]);
        let mut spans: Vec<(u32, u32)> = layout
            .placed
            .iter()
            .filter(|p| p.x <= x0 && p.x + p.w >= x1)
            .map(|p| (p.y, p.y + p.h))
            .collect();
        spans.sort_unstable();
        let mut len = 0u64;
        let mut cur: Option<(u32, u32)> = None;
        for (a, b) in spans {
            cur = match cur {
                Some((s, e)) if a <= e => Some((s, e.max(b))),
                Some((s, e)) => {
                    len += u64::from(e - s);
                    Some((a, b))
                }
                None => Some((a, b)),
            };
        }
        if let Some((s, e)) = cur {
            len += u64::from(e - s);
        }
        covered += len * u64::from(x1 - x0);
    }
    covered as f64 / layout.page.area() as f64
}

pub fn evaluate(layout: &Layout) -> Result<MetricsReport> {
    let (align_sum, align_mean) = align_score(layout)?;
    Ok(MetricsReport {
        align_sum,
        align_mean,
        density: density_score(layout),
        density_union: density_union(layout),
        n_elements: layout.placed.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n_layouts: usize,
    pub mean_elements: f64,
    pub mean_align_sum: f64,
    pub mean_align: f64,
    pub mean_density: f64,
    pub mean_density_union: f64,
    /// `mean_align / baseline mean_align`; absent for the baseline itself or
    /// when there is nothing to compare with.
    pub align_ratio: Option<f64>,
    pub density_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: Option<String>,
    pub rows: Vec<MethodSummary>,
}

fn summarize(method: &str, layouts: &[Layout]) -> Result<MethodSummary> {
    if layouts.is_empty() {
        return Err(Error::Metrics(format!("dataset {method:?} is empty")));
    }
    let n = layouts.len() as f64;
    let mut acc = [0.0f64; 5];
    for l in layouts {
        let r = evaluate(l)?;
        acc[0] += r.n_elements as f64;
        acc[1] += r.align_sum;
        acc[2] += r.align_mean;
        acc[3] += r.density;
        acc[4] += r.density_union;
    }
    Ok(MethodSummary {
        method: method.to_owned(),
        n_layouts: layouts.len(),
        mean_elements: acc[0] / n,
        mean_align_sum: acc[1] / n,
        mean_align: acc[2] / n,
        mean_density: acc[3] / n,
        mean_density_union: acc[4] / n,
        align_ratio: None,
        density_ratio: None,
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == b {
        1.0
    } else {
        a / b
    }
}

/// Per-method means plus ratios against `baseline` (defaults to `"random"`
/// when present). All datasets must share one page geometry.
pub fn compare_methods(
    datasets: &BTreeMap<String, Vec<Layout>>,
    baseline: Option<&str>,
) -> Result<ComparisonTable> {
    let mut page: Option<PageSpec> = None;
    for (name, layouts) in datasets {
        for l in layouts {
            match page {
                None => page = Some(l.page),
                Some(p) if p != l.page => {
                    return Err(Error::Metrics(format!(
                        "dataset {name:?} mixes page specs {p:?} and {:?}",
                        l.page
                    )))
                }
                _ => {}
            }
        }
    }
    let mut rows = datasets
        .iter()
        .map(|(name, ls)| summarize(name, ls))
        .collect::<Result<Vec<_>>>()?;
    let baseline = match baseline {
        Some(b) if !datasets.contains_key(b) => {
            return Err(Error::Metrics(format!("baseline {b:?} is not among the datasets")))
        }
        Some(b) => Some(b.to_owned()),
        None if datasets.contains_key("random") => Some("random".to_owned()),
        None => datasets.keys().next().cloned(),
    }
    .filter(|_| rows.len() > 1);
    if let Some(b) = &baseline {
        let base = rows.iter().find(|r| &r.method == b).cloned().expect("baseline row");
        for r in rows.iter_mut().filter(|r| &r.method != b) {
            r.align_ratio = Some(ratio(r.mean_align, base.mean_align));
            r.density_ratio = Some(ratio(r.mean_density, base.mean_density));
        }
    }
    Ok(ComparisonTable { baseline, rows })
}

impl ComparisonTable {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    /// Aligned-column text rendering.
    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_owned(), |v| format!("{v:.4}"));
        let header = [
            "method", "layouts", "elements", "align", "align_sum", "density", "density_union",
            "align_ratio", "density_ratio",
        ];
        let mut cells: Vec<Vec<String>> = vec![header.iter().map(|s| s.to_string()).collect()];
        for r in &self.rows {
            cells.push(vec![
                r.method.clone(),
                r.n_layouts.to_string(),
                format!("{:.2}", r.mean_elements),
                format!("{:.6}", r.mean_align),
                format!("{:.6}", r.mean_align_sum),
                format!("{:.4}", r.mean_density),
                format!("{:.4}", r.mean_density_union),
                opt(r.align_ratio),
                opt(r.density_ratio),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| cells.iter().map(|row| row[c].len()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &cells {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (v, w))| if i == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        if let Some(b) = &self.baseline {
            let _ = writeln!(out, "ratios relative to {b}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::PlacedElement;
    use crate::pool::ElementId;

    fn layout(page: PageSpec, boxes: &[(u32, u32, u32, u32)]) -> Layout {
        Layout {
            page,
            seed: 0,
            placed: boxes
                .iter()
                .enumerate()
                .map(|(i, &(x, y, w, h))| PlacedElement {
                    element_id: ElementId(i as u32),
                    category: "c".into(),
                    x,
                    y,
                    w,
                    h,
                    scale: 1.0,
                })
                .collect(),
        }
    }

    fn page(w: u32, h: u32) -> PageSpec {
        PageSpec { width_px: w, height_px: h, margin_px: 0 }
    }

    #[test]
    fn shared_left_edge_aligns_perfectly() {
        let l = layout(page(1000, 1000), &[(100, 100, 200, 50), (100, 500, 370, 90)]);
        assert_eq!(align_score(&l).unwrap().0, 0.0);
    }

    #[test]
    fn single_and_empty() {
        let p = page(100, 100);
        assert_eq!(align_score(&layout(p, &[(1, 2, 3, 4)])).unwrap(), (0.0, 0.0));
        assert!(align_score(&layout(p, &[])).is_err());
        assert_eq!(density_score(&layout(p, &[])), 0.0);
    }

    #[test]
    fn density_cases() {
        let p = page(100, 100);
        assert_eq!(density_score(&layout(p, &[(0, 0, 100, 100)])), 1.0);
        assert_eq!(density_score(&layout(p, &[(0, 0, 50, 50), (50, 50, 50, 50)])), 0.5);
    }

    #[test]
    fn union_density_counts_overlap_once() {
        let l = layout(page(100, 100), &[(0, 0, 50, 50), (25, 25, 50, 50)]);
        assert_eq!(density_score(&l), 0.5);
        assert!((density_union(&l) - (2500.0 + 2500.0 - 625.0) / 10000.0).abs() < 1e-15);
    }

    #[test]
    fn identical_datasets_give_unit_ratios() {
        let l = layout(page(1000, 1000), &[(10, 10, 100, 100), (300, 170, 50, 40)]);
        let mut d = BTreeMap::new();
        d.insert("a".to_owned(), vec![l.clone(); 3]);
        d.insert("b".to_owned(), vec![l; 3]);
        let t = compare_methods(&d, Some("a")).unwrap();
        let b = t.rows.iter().find(|r| r.method == "b").unwrap();
        assert_eq!(b.align_ratio, Some(1.0));
        assert_eq!(b.density_ratio, Some(1.0));
    }

    #[test]
    fn single_dataset_has_no_ratios() {
        let l = layout(page(1000, 1000), &[(10, 10, 100, 100)]);
        let mut d = BTreeMap::new();
        d.insert("bestfit".to_owned(), vec![l]);
        let t = compare_methods(&d, None).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert_eq!(t.baseline, None);
        assert!(t.rows[0].align_ratio.is_none());
    }

    #[test]
    fn mismatched_pages_rejected() {
        let mut d = BTreeMap::new();
        d.insert("a".to_owned(), vec![layout(page(100, 100), &[(0, 0, 1, 1)])]);
        d.insert("b".to_owned(), vec![layout(page(200, 100), &[(0, 0, 1, 1)])]);
        assert!(compare_methods(&d, None).is_err());
        let mut e = BTreeMap::new();
        e.insert("a".to_owned(), Vec::new());
        assert!(compare_methods(&e, None).is_err());
    }
}
