//! Meshgrid construction and best-fit matching.
//!
//! The mesh of a partial layout is every rectangle spanned by two vertical
//! and two horizontal grid lines, where the lines are the interior border
//! plus the edges of placed elements. Each rectangle is shrunk by the gutter
//! on all four sides and kept only if it is free of placed elements.

use std::collections::HashMap;

use super::{Candidate, GridCell, Layout};
use crate::pool::ElementId;

fn grid_lines(lo: u32, hi: u32, edges: impl Iterator<Item = (u32, u32)>) -> Vec<u32> {
    let mut v = vec![lo, hi];
    for (a, b) in edges {
        v.push(a.clamp(lo, hi));
        v.push(b.clamp(lo, hi));
    }
    v.sort_unstable();
    v.dedup();
    v
}

/// All free mesh cells of `layout`, each shrunk by `gutter_px` per side.
pub fn build_meshgrid(layout: &Layout, gutter_px: u32) -> Vec<GridCell> {
    let page = &layout.page;
    let m = page.margin_px;
    let g = i64::from(gutter_px);
    let vs = grid_lines(
        m,
        page.width_px - m,
        layout.placed.iter().map(|p| (p.x, p.x + p.w)),
    );
    let hs = grid_lines(
        m,
        page.height_px - m,
        layout.placed.iter().map(|p| (p.y, p.y + p.h)),
    );

    let mut cells = Vec::new();
    let mut blocked: Vec<(i64, i64)> = Vec::with_capacity(layout.placed.len());
    for a in 0..vs.len() {
        for b in a + 1..vs.len() {
            let x0 = i64::from(vs[a]) + g;
            let x1 = i64::from(vs[b]) - g;
            if x1 <= x0 {
                continue;
            }
            blocked.clear();
            blocked.extend(
                layout
                    .placed
                    .iter()
                    .filter(|p| i64::from(p.x) < x1 && i64::from(p.x + p.w) > x0)
                    .map(|p| (i64::from(p.y), i64::from(p.y + p.h))),
            );
            for c in 0..hs.len() {
                let y0 = i64::from(hs[c]) + g;
                // The cell [y0, y1) is free iff y1 stays at or above the top
                // of every blocker that reaches below y0.
                let limit = blocked
                    .iter()
                    .filter(|&&(_, bot)| bot > y0)
                    .map(|&(top, _)| top)
                    .min()
                    .unwrap_or(i64::MAX);
                if limit <= y0 {
                    continue;
                }
                for &line in &hs[c + 1..] {
                    let y1 = i64::from(line) - g;
                    if y1 <= y0 {
                        continue;
                    }
                    if y1 > limit {
                        break;
                    }
                    cells.push(GridCell {
                        x: x0 as u32,
                        y: y0 as u32,
                        w: (x1 - x0) as u32,
                        h: (y1 - y0) as u32,
                    });
                }
            }
        }
    }
    cells
}

/// Candidate area over cell area, or `None` when the candidate does not fit
/// unscaled.
pub fn fill_rate(candidate: &Candidate, cell: &GridCell) -> Option<f64> {
    if candidate.w > cell.w || candidate.h > cell.h || cell.area() == 0 {
        return None;
    }
    Some(candidate.area() as f64 / cell.area() as f64)
}

/// Winning pair of a best-fit search. `candidate` indexes the slice passed
/// to [`best_fit_search`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BestFit {
    pub candidate: usize,
    pub cell: GridCell,
    pub fill_rate: f64,
}

fn cell_key(c: &GridCell) -> (u64, u32, u32, u32, u32) {
    (c.area(), c.y, c.x, c.w, c.h)
}

/// Maximum-fill-rate (candidate, cell) pair.
///
/// Ties go to the smaller cell, then the lower candidate id, then the cell
/// position compared as `(y, x, w, h)`.
pub fn best_fit_search(candidates: &[Candidate], cells: &[GridCell]) -> Option<BestFit> {
    // Fill rate depends only on cell dimensions, so one cell per (w, h)
    // suffices: the one that wins the positional tie-break.
    let mut by_dims: HashMap<(u32, u32), GridCell> = HashMap::with_capacity(cells.len());
    for c in cells.iter().filter(|c| c.area() > 0) {
        by_dims
            .entry((c.w, c.h))
            .and_modify(|kept| {
                if cell_key(c) < cell_key(kept) {
                    *kept = *c;
                }
            })
            .or_insert(*c);
    }
    let mut uniq: Vec<GridCell> = by_dims.into_values().collect();
    uniq.sort_unstable_by_key(cell_key);

    let mut best: Option<(BestFit, ElementId)> = None;
    for (ci, cand) in candidates.iter().enumerate() {
        let start = uniq.partition_point(|c| c.area() < cand.area());
        // First fitting cell in (area, position) order is this candidate's
        // best cell.
        let Some(cell) = uniq[start..]
            .iter()
            .find(|c| cand.w <= c.w && cand.h <= c.h)
        else {
            continue;
        };
        let fr = cand.area() as f64 / cell.area() as f64;
        let better = match &best {
            None => true,
            Some((b, best_id)) => {
                fr > b.fill_rate
                    || (fr == b.fill_rate
                        && (cell.area(), cand.id, (cell.y, cell.x, cell.w, cell.h))
                            < (b.cell.area(), *best_id, (b.cell.y, b.cell.x, b.cell.w, b.cell.h)))
            }
        };
        if better {
            best = Some((
                BestFit {
                    candidate: ci,
                    cell: *cell,
                    fill_rate: fr,
                },
                cand.id,
            ));
        }
    }
    best.map(|(b, _)| b)
}
