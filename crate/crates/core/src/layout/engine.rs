use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;

use super::mesh::{best_fit_search, build_meshgrid, fill_rate};
use super::{Candidate, EngineConfig, GridCell, Layout, Method, PageSpec, PlacedElement};
use crate::error::{Error, Result};
use crate::pool::{ElementPool, ElementRecord};
use crate::rng::{derive_seed, rng_from_seed, DetRng};

/// Size-stratified sample of the pool.
///
/// Elements that do not fit the page interior are excluded. The rest are
/// sorted by `(area, id)` and cut into `cfg.strata` equal-count strata; the
/// sample takes `candidate_set_size / strata` from each, the remainder going
/// to the largest strata, with any shortfall of a thin stratum moved to the
/// others (largest first). A pool no larger than the request is returned
/// whole in id order.
pub fn sample_candidate_set(
    pool: &ElementPool,
    page: &PageSpec,
    cfg: &EngineConfig,
    rng: &mut DetRng,
) -> Vec<ElementRecord> {
    let all = pool.records();
    let mut eligible: Vec<&ElementRecord> = all
        .iter()
        .copied()
        .filter(|r| page.fits(r.width(), r.height()))
        .collect();
    let excluded = all.len() - eligible.len();
    if excluded > 0 {
        log::warn!("{excluded} elements exceed the page interior and are never sampled");
    }
    let want = cfg.candidate_set_size;
    if eligible.len() <= want {
        if eligible.len() < want {
            log::warn!(
                "pool has {} placeable elements, fewer than the candidate set size {want}",
                eligible.len()
            );
        }
        return eligible.into_iter().cloned().collect();
    }

    eligible.sort_by_key(|r| (r.area(), r.id));
    let n = eligible.len();
    let s = cfg.strata.min(n);
    let bounds: Vec<(usize, usize)> = (0..s).map(|i| (i * n / s, (i + 1) * n / s)).collect();
    let mut quota: Vec<usize> = (0..s)
        .map(|i| want / s + usize::from(i >= s - want % s))
        .collect();
    let mut spill = 0;
    for (q, (a, b)) in quota.iter_mut().zip(&bounds) {
        if *q > b - a {
            spill += *q - (b - a);
            *q = b - a;
        }
    }
    for (q, (a, b)) in quota.iter_mut().zip(&bounds).rev() {
        let room = (b - a) - *q;
        let take = room.min(spill);
        *q += take;
        spill -= take;
    }

    let mut out = Vec::with_capacity(want);
    for (q, (a, b)) in quota.into_iter().zip(bounds) {
        let stratum = &eligible[a..b];
        for i in index::sample(rng, stratum.len(), q) {
            out.push(stratum[i].clone());
        }
    }
    out
}

/// Places `candidate` at a uniformly random position of the page interior.
pub fn seed_layout(page: &PageSpec, candidate: &Candidate, seed: u64, rng: &mut DetRng) -> Result<Layout> {
    page.validate()?;
    if !page.fits(candidate.w, candidate.h) {
        return Err(Error::Layout(format!(
            "element {} ({}x{}) does not fit the {}x{} page interior",
            candidate.id,
            candidate.w,
            candidate.h,
            page.interior_width(),
            page.interior_height()
        )));
    }
    let mut layout = Layout::empty(*page, seed);
    layout.placed.push(random_placement(page, candidate, rng));
    Ok(layout)
}

fn random_placement(page: &PageSpec, c: &Candidate, rng: &mut DetRng) -> PlacedElement {
    let m = page.margin_px;
    let x = rng.random_range(m..=page.width_px - m - c.w);
    let y = rng.random_range(m..=page.height_px - m - c.h);
    PlacedElement {
        element_id: c.id,
        category: c.category.clone(),
        x,
        y,
        w: c.w,
        h: c.h,
        scale: 1.0,
    }
}

/// Puts `candidate` at the top-left corner of `cell`.
pub fn place(layout: &mut Layout, candidate: &Candidate, cell: &GridCell) -> Result<()> {
    if fill_rate(candidate, cell).is_none() {
        return Err(Error::Layout(format!(
            "element {} ({}x{}) does not fit cell {}x{} at ({}, {})",
            candidate.id, candidate.w, candidate.h, cell.w, cell.h, cell.x, cell.y
        )));
    }
    layout.placed.push(PlacedElement {
        element_id: candidate.id,
        category: candidate.category.clone(),
        x: cell.x,
        y: cell.y,
        w: candidate.w,
        h: candidate.h,
        scale: 1.0,
    });
    Ok(())
}

/// Shrinks every element about its own centre by an independent factor from
/// `cfg.scale_range`. The new box always stays inside the old one.
pub fn apply_central_scaling(layout: &mut Layout, cfg: &EngineConfig, rng: &mut DetRng) {
    let [lo, hi] = cfg.scale_range;
    for p in &mut layout.placed {
        let s: f64 = rng.random_range(lo..=hi);
        let w = ((f64::from(p.w) * s).round() as u32).clamp(1, p.w);
        let h = ((f64::from(p.h) * s).round() as u32).clamp(1, p.h);
        p.x += (p.w - w) / 2;
        p.y += (p.h - h) / 2;
        p.w = w;
        p.h = h;
        p.scale = s;
    }
}

/// One page by mesh-candidate best fit.
///
/// After a random first element, each round rebuilds the meshgrid of the
/// partial layout and places the (candidate, cell) pair with the highest fill
/// rate. The loop ends at `n_max` elements, when the candidate set runs out,
/// when nothing fits, or when the best fill rate drops below `fr_thr`. Once
/// `mini_num` small elements are on the page, further small candidates are
/// ignored. Central scaling is applied last.
pub fn generate_layout(
    pool: &ElementPool,
    page: &PageSpec,
    cfg: &EngineConfig,
    seed: u64,
) -> Result<Layout> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut remaining: Vec<Candidate> = sample_candidate_set(pool, page, cfg, &mut rng)
        .iter()
        .map(Candidate::from)
        .collect();
    if remaining.is_empty() {
        return Err(Error::Layout("no pool element fits the page interior".into()));
    }
    let first = remaining.remove(rng.random_range(0..remaining.len()));
    let mut layout = seed_layout(page, &first, seed, &mut rng)?;
    let mut small = usize::from(cfg.is_small(page, first.w, first.h));

    while layout.placed.len() < cfg.n_max && !remaining.is_empty() {
        let cells = build_meshgrid(&layout, cfg.gutter_px);
        let (slots, eligible): (Vec<usize>, Vec<Candidate>) = remaining
            .iter()
            .enumerate()
            .filter(|(_, c)| small < cfg.mini_num || !cfg.is_small(page, c.w, c.h))
            .map(|(i, c)| (i, c.clone()))
            .unzip();
        let Some(best) = best_fit_search(&eligible, &cells) else {
            break;
        };
        if best.fill_rate < cfg.fr_thr {
            break;
        }
        let chosen = remaining.remove(slots[best.candidate]);
        place(&mut layout, &chosen, &best.cell)?;
        small += usize::from(cfg.is_small(page, chosen.w, chosen.h));
    }

    apply_central_scaling(&mut layout, cfg, &mut rng);
    Ok(layout)
}

/// Random-arrangement baseline: the same candidate sampling and element
/// budget, uniform positions, overlaps allowed, no scaling. The element
/// count is drawn uniformly from `1..=min(n_max, candidates)`.
pub fn generate_random_layout(
    pool: &ElementPool,
    page: &PageSpec,
    cfg: &EngineConfig,
    seed: u64,
) -> Result<Layout> {
    cfg.validate()?;
    page.validate()?;
    let mut rng = rng_from_seed(seed);
    let mut cands: Vec<Candidate> = sample_candidate_set(pool, page, cfg, &mut rng)
        .iter()
        .map(Candidate::from)
        .collect();
    if cands.is_empty() {
        return Err(Error::Layout("no pool element fits the page interior".into()));
    }
    cands.shuffle(&mut rng);
    let count = rng.random_range(1..=cfg.n_max.min(cands.len()));
    cands.truncate(count);
    let mut layout = Layout::empty(*page, seed);
    for c in &cands {
        layout.placed.push(random_placement(page, c, &mut rng));
    }
    Ok(layout)
}

/// `count` layouts; layout `i` uses seed `derive_seed(cfg.seed, i)`, so the
/// result does not depend on the rayon pool size.
pub fn generate_dataset(
    pool: &ElementPool,
    page: &PageSpec,
    cfg: &EngineConfig,
    count: usize,
    method: Method,
) -> Result<Vec<Layout>> {
    if count == 0 {
        return Err(Error::Config("dataset count must be >= 1".into()));
    }
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(cfg.seed, i);
            match method {
                Method::BestFit => generate_layout(pool, page, cfg, seed),
                Method::Random => generate_random_layout(pool, page, cfg, seed),
            }
        })
        .collect()
}
