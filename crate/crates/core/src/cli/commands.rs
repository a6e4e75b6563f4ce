use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use docsynth::crm::{run_selfcheck, CrmConfig, CrmParams, Preset, SelfCheckOptions};
use docsynth::layout::{
    build_meshgrid, generate_dataset, EngineConfig, Layout, Method, PageSpec,
};
use docsynth::metrics::compare_methods;
use docsynth::pool::{
    augment_rare_categories, load_pool, load_pool_with_images, make_synthetic_pool, AugmentConfig,
    ElementPool, SyntheticPoolSpec,
};
use docsynth::render::{compose_page, export_coco, export_svg_debug, page_file_name};

use super::config::ConfigFile;
use super::{
    AugmentArgs, CliError, EngineArgs, ExportArgs, MetricsArgs, PageArgs, PoolArgs, PoolSource,
    RenderArgs, SelfCheckArgs, SynthArgs, DEFAULT_OUT, OUT_ENV,
};

type CliResult<T = ()> = Result<T, CliError>;

pub const LAYOUT_DIR: &str = "layouts";
pub const IMAGE_DIR: &str = "images";
pub const DEBUG_DIR: &str = "debug";
pub const COCO_FILE: &str = "annotations.coco.json";

fn out_dir(flag: Option<PathBuf>, file: &ConfigFile) -> CliResult<PathBuf> {
    if let Some(p) = file.pick(flag, "out")? {
        return Ok(p);
    }
    Ok(std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from))
}

fn mkdir(p: &Path) -> CliResult {
    fs::create_dir_all(p).map_err(|e| CliError::Data(format!("cannot create {}: {e}", p.display())))
}

fn parse_synthetic(spec: &str) -> CliResult<(usize, usize)> {
    let bad = || CliError::Usage(format!("--synthetic expects CxN (e.g. 12x25), got {spec:?}"));
    let (c, n) = spec.split_once(['x', 'X']).ok_or_else(bad)?;
    let c: usize = c.trim().parse().map_err(|_| bad())?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    if c == 0 || n == 0 {
        return Err(bad());
    }
    Ok((c, n))
}

fn resolve_page(a: &PageArgs, file: &ConfigFile, base: PageSpec) -> CliResult<PageSpec> {
    let page = PageSpec {
        width_px: file.pick(a.page_width, "page_width")?.unwrap_or(base.width_px),
        height_px: file.pick(a.page_height, "page_height")?.unwrap_or(base.height_px),
        margin_px: file.pick(a.margin, "margin")?.unwrap_or(base.margin_px),
    };
    page.validate()?;
    Ok(page)
}

fn resolve_engine(a: &EngineArgs, file: &ConfigFile, seed: u64) -> CliResult<EngineConfig> {
    let d = EngineConfig::default();
    let cfg = EngineConfig {
        n_max: file.pick(a.n_max, "n_max")?.unwrap_or(d.n_max),
        fr_thr: file.pick(a.fr_thr, "fr_thr")?.unwrap_or(d.fr_thr),
        mini_num: file.pick(a.mini_num, "mini_num")?.unwrap_or(d.mini_num),
        small_area_frac: file.pick(a.small_area_frac, "small_area_frac")?.unwrap_or(d.small_area_frac),
        candidate_set_size: file
            .pick(a.candidate_set_size, "candidate_set_size")?
            .unwrap_or(d.candidate_set_size),
        strata: file.pick(a.strata, "strata")?.unwrap_or(d.strata),
        scale_range: [
            file.pick(a.scale_min, "scale_min")?.unwrap_or(d.scale_range[0]),
            file.pick(a.scale_max, "scale_max")?.unwrap_or(d.scale_range[1]),
        ],
        gutter_px: file.pick(a.gutter_px, "gutter_px")?.unwrap_or(d.gutter_px),
        seed,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_augment(a: &AugmentArgs, file: &ConfigFile) -> CliResult<AugmentConfig> {
    let d = AugmentConfig::default();
    let cfg = AugmentConfig {
        min_count: file.pick(a.min_count, "min_count")?.unwrap_or(d.min_count),
        p_flip: file.pick(a.p_flip, "p_flip")?.unwrap_or(d.p_flip),
        p_bc: file.pick(a.p_bc, "p_bc")?.unwrap_or(d.p_bc),
        p_crop: file.pick(a.p_crop, "p_crop")?.unwrap_or(d.p_crop),
        p_edge: file.pick(a.p_edge, "p_edge")?.unwrap_or(d.p_edge),
        crop_area_range: [
            file.pick(a.crop_area_min, "crop_area_min")?.unwrap_or(d.crop_area_range[0]),
            file.pick(a.crop_area_max, "crop_area_max")?.unwrap_or(d.crop_area_range[1]),
        ],
        bc_delta: file.pick(a.bc_delta, "bc_delta")?.unwrap_or(d.bc_delta),
        elastic_alpha: file.pick(a.elastic_alpha, "elastic_alpha")?.unwrap_or(d.elastic_alpha),
        elastic_sigma: file.pick(a.elastic_sigma, "elastic_sigma")?.unwrap_or(d.elastic_sigma),
        noise_std: file.pick(a.noise_std, "noise_std")?.unwrap_or(d.noise_std),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match threads {
        None | Some(0) => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Loads a saved pool or builds a procedural one. `page` is only used for
/// the procedural generator's size check.
fn load_source(src: &PoolSource, file: &ConfigFile, page: Option<PageSpec>) -> CliResult<ElementPool> {
    match (&src.pool, &src.synthetic) {
        (Some(dir), _) => Ok(ElementPool::load_dir(dir)?),
        (None, Some(spec)) => {
            let (c, n) = parse_synthetic(spec)?;
            let seed = file.pick(src.pool_seed, "pool_seed")?.unwrap_or(0);
            let mut s = SyntheticPoolSpec::new(c, n, seed);
            if let Some(p) = page {
                s.page = p;
            }
            Ok(make_synthetic_pool(&s)?)
        }
        (None, None) => Err(CliError::Usage("pass --pool DIR or --synthetic CxN".into())),
    }
}

fn write_layouts(dir: &Path, layouts: &[Layout]) -> CliResult {
    mkdir(dir)?;
    // Drop files from earlier, larger runs so the directory matches this run.
    if let Ok(entries) = fs::read_dir(dir) {
        for e in entries.flatten() {
            let name = e.file_name();
            let name = name.to_string_lossy();
            if name.starts_with("layout_") && name.ends_with(".json") {
                fs::remove_file(e.path())
                    .map_err(|err| CliError::Data(format!("cannot remove {name}: {err}")))?;
            }
        }
    }
    layouts
        .par_iter()
        .enumerate()
        .try_for_each(|(i, l)| l.write(&dir.join(format!("layout_{i:06}.json"))))?;
    Ok(())
}

/// Layout files of `dir` (or of `dir/layouts`), in file-name order.
fn read_layouts(dir: &Path) -> CliResult<Vec<Layout>> {
    let nested = dir.join(LAYOUT_DIR);
    let dir = if nested.is_dir() { nested } else { dir.to_owned() };
    let entries = fs::read_dir(&dir)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("layout_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("no layout_*.json files in {}", dir.display())));
    }
    Ok(paths.iter().map(|p| Layout::read(p)).collect::<Result<_, _>>()?)
}

fn render_images(out: &Path, layouts: &[Layout], pool: &ElementPool) -> CliResult {
    let dir = out.join(IMAGE_DIR);
    mkdir(&dir)?;
    layouts.par_iter().enumerate().try_for_each(|(i, l)| {
        compose_page(l, pool)?.save_png(&dir.join(page_file_name(i)))
    })?;
    Ok(())
}

fn write_svgs(out: &Path, layouts: &[Layout], gutter_px: u32) -> CliResult {
    let dir = out.join(DEBUG_DIR);
    mkdir(&dir)?;
    layouts.par_iter().enumerate().try_for_each(|(i, l)| {
        let cells = if l.placed.is_empty() { Vec::new() } else { build_meshgrid(l, gutter_px) };
        export_svg_debug(l, Some(&cells), &dir.join(format!("page_{i:06}.svg")))
    })?;
    Ok(())
}

/// Category vocabulary for COCO: the pool's categories when known, else
/// the sorted categories seen in the layouts.
fn vocabulary(pool: Option<&ElementPool>, layouts: &[Layout]) -> Vec<String> {
    match pool {
        Some(p) => p.category_names().map(str::to_owned).collect(),
        None => {
            let mut v: Vec<String> = layouts
                .iter()
                .flat_map(|l| l.placed.iter().map(|p| p.category.clone()))
                .collect();
            v.sort();
            v.dedup();
            v
        }
    }
}

pub fn pool(a: PoolArgs, file: &ConfigFile) -> CliResult {
    let seed = file.pick(a.seed, "seed")?.unwrap_or(0);
    let out = out_dir(a.out, file)?;
    let aug = if a.augment { Some(resolve_augment(&a.aug, file)?) } else { None };

    let mut pool = match (&a.synthetic, &a.manifest) {
        (Some(spec), _) => {
            let (c, n) = parse_synthetic(spec)?;
            let mut s = SyntheticPoolSpec::new(c, n, seed);
            s.page = resolve_page(&a.page, file, PageSpec::default())?;
            make_synthetic_pool(&s)?
        }
        (None, Some(manifest)) => {
            let loaded = match &a.images {
                Some(dir) => load_pool_with_images(manifest, dir)?,
                None => load_pool(manifest)?,
            };
            if loaded.skipped_annotations > 0 {
                warn!("skipped {} annotations with out-of-image boxes", loaded.skipped_annotations);
            }
            loaded.pool
        }
        (None, None) => return Err(CliError::Usage("pass --synthetic CxN or --manifest FILE".into())),
    };
    if pool.is_empty() {
        return Err(CliError::Data("pool has no elements".into()));
    }

    let mut added = BTreeMap::new();
    if let Some(cfg) = aug {
        let (augmented, report) = augment_rare_categories(&pool, &cfg, seed)?;
        for c in &report.empty_categories {
            warn!("category {c:?} has no elements to augment from");
        }
        added = report.added;
        pool = augmented;
    }

    mkdir(&out)?;
    pool.save(&out)?;
    for (cat, n) in pool.counts() {
        match added.get(&cat) {
            Some(k) if *k > 0 => println!("{cat}\t{n}\t(+{k} augmented)"),
            _ => println!("{cat}\t{n}"),
        }
    }
    println!("{} elements written to {}", pool.len(), out.display());
    Ok(())
}

pub fn synth(a: SynthArgs, file: &ConfigFile) -> CliResult {
    let seed = file.pick(a.seed, "seed")?.unwrap_or(0);
    let count = file.pick(a.count, "count")?.unwrap_or(100);
    let threads = file.pick(a.threads, "threads")?;
    let method: Method = file
        .pick(a.method, "method")?
        .map_or(Ok(Method::BestFit), |m: String| m.parse())?;
    let out = out_dir(a.out, file)?;
    if count == 0 {
        return Err(CliError::Usage("--count must be >= 1".into()));
    }

    // Page: flags, then file, then the pool's recorded page size, then A4.
    let explicit = resolve_page(&a.page, file, PageSpec::default())?;
    let pool = load_source(&a.source, file, Some(explicit))?;
    if pool.is_empty() {
        return Err(CliError::Data("pool has no elements".into()));
    }
    let page = resolve_page(&a.page, file, pool.page_spec_hint.unwrap_or_default())?;
    let cfg = resolve_engine(&a.engine, file, seed)?;
    info!("generating {count} {method} layouts on a {}x{} page", page.width_px, page.height_px);

    with_threads(threads, || -> CliResult {
        let layouts = generate_dataset(&pool, &page, &cfg, count, method)?;
        if method == Method::BestFit {
            for (i, l) in layouts.iter().enumerate() {
                l.check_bestfit_invariants(&pool, &cfg)
                    .map_err(|e| CliError::Check(format!("layout {i}: {e}")))?;
            }
        }
        write_layouts(&out.join(LAYOUT_DIR), &layouts)?;
        if a.render {
            render_images(&out, &layouts, &pool)?;
        }
        if a.coco {
            export_coco(&layouts, &vocabulary(Some(&pool), &layouts), &out.join(COCO_FILE))?;
        }
        if a.svg {
            write_svgs(&out, &layouts, cfg.gutter_px)?;
        }
        println!("{count} {method} layouts written to {}", out.join(LAYOUT_DIR).display());
        Ok(())
    })?
}

pub fn render(a: RenderArgs, file: &ConfigFile) -> CliResult {
    let out = out_dir(a.out, file)?;
    let threads = file.pick(a.threads, "threads")?;
    let gutter = file.pick(a.gutter_px, "gutter_px")?.unwrap_or(EngineConfig::default().gutter_px);
    let layouts = read_layouts(&a.layouts)?;
    let pool = load_source(&a.source, file, Some(layouts[0].page))?;
    with_threads(threads, || -> CliResult {
        render_images(&out, &layouts, &pool)?;
        if a.svg {
            write_svgs(&out, &layouts, gutter)?;
        }
        println!("{} pages rendered to {}", layouts.len(), out.join(IMAGE_DIR).display());
        Ok(())
    })?
}

pub fn export_coco_cmd(a: ExportArgs, file: &ConfigFile) -> CliResult {
    let out = out_dir(a.out, file)?;
    let layouts = read_layouts(&a.layouts)?;
    let pool = if a.source.pool.is_some() || a.source.synthetic.is_some() {
        Some(load_source(&a.source, file, Some(layouts[0].page))?)
    } else {
        None
    };
    mkdir(&out)?;
    let path = out.join(COCO_FILE);
    export_coco(&layouts, &vocabulary(pool.as_ref(), &layouts), &path)?;
    println!("{} images annotated in {}", layouts.len(), path.display());
    Ok(())
}

pub fn metrics(a: MetricsArgs, file: &ConfigFile) -> CliResult {
    let out = out_dir(a.out, file)?;
    let mut datasets = BTreeMap::new();
    for spec in &a.datasets {
        let (name, dir) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--dataset expects NAME=DIR, got {spec:?}")))?;
        if name.is_empty() || datasets.contains_key(name) {
            return Err(CliError::Usage(format!("dataset name {name:?} is empty or repeated")));
        }
        datasets.insert(name.to_owned(), read_layouts(Path::new(dir))?);
    }
    let table = compare_methods(&datasets, a.baseline.as_deref()).map_err(|e| match e {
        docsynth::Error::Metrics(m) if m.contains("baseline") => CliError::Usage(m),
        other => other.into(),
    })?;
    mkdir(&out)?;
    let text = table.to_text();
    for (name, body) in [("metrics.json", table.to_json()), ("metrics.txt", text.clone())] {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| CliError::Data(format!("cannot write {}: {e}", p.display())))?;
    }
    print!("{text}");
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsFile {
    config: CrmConfig,
    params: CrmParams,
}

pub fn crm_selfcheck(a: SelfCheckArgs, file: &ConfigFile) -> CliResult {
    let presets = match a.preset.as_str() {
        "global" => vec![Preset::Global],
        "block" => vec![Preset::Block],
        _ => vec![Preset::Global, Preset::Block],
    };
    let extra = match &a.params {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            let pf: ParamsFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            pf.config.validate()?;
            Some((pf.config, pf.params))
        }
        None => None,
    };
    let opts = SelfCheckOptions {
        presets,
        cases: a.cases,
        seed: file.pick(a.seed, "seed")?.unwrap_or(0),
        extra,
        inject_padding_fault: a.inject_padding_fault,
    };
    let report = run_selfcheck(&opts)?;
    for c in &report.checks {
        println!(
            "{} {:<32} max_dev={:.3e} tol={:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_deviation,
            c.tolerance
        );
    }
    if report.passed() {
        Ok(())
    } else {
        let n = report.checks.iter().filter(|c| !c.passed).count();
        Err(CliError::Check(format!("{n} self-check(s) failed")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_spec_parsing() {
        assert_eq!(parse_synthetic("12x25").unwrap(), (12, 25));
        assert_eq!(parse_synthetic("3X4").unwrap(), (3, 4));
        assert!(parse_synthetic("12").is_err());
        assert!(parse_synthetic("0x5").is_err());
        assert!(parse_synthetic("ax5").is_err());
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = ConfigFile::parse("n_max = 7\nfr_thr = 0.01\n", None).unwrap();
        let args = EngineArgs {
            n_max: Some(9),
            ..Default::default()
        };
        let cfg = resolve_engine(&args, &file, 3).unwrap();
        assert_eq!(cfg.n_max, 9);
        assert_eq!(cfg.fr_thr, 0.01);
        assert_eq!(cfg.mini_num, 5);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn invalid_engine_values_are_usage_errors() {
        let file = ConfigFile::parse("fr_thr = 0\n", None).unwrap();
        let err = resolve_engine(&EngineArgs::default(), &file, 0).unwrap_err();
        assert_eq!(err.code(), 1);
    }
}
