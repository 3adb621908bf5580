use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use spa_core::eval::{evaluate_dataset, extract_bbox, load_annotations, ImageEval};
use spa_core::ram::{loss_gradient, pseudo_masks, total_loss};
use spa_core::scg::scg_map;
use spa_core::selfcorr::layered_hsc;
use spa_core::{
    generate_fixture, read_tensor, write_tensor, BBox, DenseTensor, EvalMode, FeatureGrid,
    FixtureSpec, ImageRecord, Map2D, ObjectShape, RamConfig, Result, ScgConfig, ScoreMap, SpaError,
};

use crate::args::*;
use crate::manifest::{beside, write_json, Run};
use crate::render::write_png;
use crate::Failure;

pub fn dispatch(cmd: &Command, echo: BTreeMap<String, String>) -> std::result::Result<(), Failure> {
    let mut run = Run::new(cmd.name(), echo);
    if let Some(p) = &cmd.common().manifest {
        run.manifest_at(p.clone());
    }
    match cmd {
        Command::Hsc(a) => hsc(a, &mut run)?,
        Command::Scg(a) => scg(a, &mut run)?,
        Command::RamMasks(a) => ram_masks(a, &mut run)?,
        Command::Loss(a) => loss(a, &mut run)?,
        Command::Grad(a) => grad(a, &mut run)?,
        Command::Bbox(a) => bbox(a, &mut run)?,
        Command::Eval(a) => eval(a, &mut run)?,
        Command::Synth(a) => synth(a, &mut run)?,
        Command::Render(a) => render(a, &mut run)?,
    }
    run.finish()?;
    Ok(())
}

fn load_grids(paths: &[PathBuf], run: &mut Run) -> Result<Vec<FeatureGrid>> {
    paths
        .iter()
        .map(|p| {
            run.input(p);
            FeatureGrid::from_tensor(&read_tensor(p)?)
        })
        .collect()
}

fn load_map(path: &Path, run: &mut Run) -> Result<Map2D> {
    run.input(path);
    Map2D::from_tensor(&read_tensor(path)?)
}

fn load_scores(path: &Path, run: &mut Run) -> Result<ScoreMap> {
    run.input(path);
    ScoreMap::from_tensor(&read_tensor(path)?)
}

fn save_tensor(t: &DenseTensor, path: &Path, run: &mut Run) -> Result<()> {
    write_tensor(t, path)?;
    run.output(path);
    Ok(())
}

fn save_json(value: &impl Serialize, path: &Path, run: &mut Run) -> Result<()> {
    write_json(path, value)?;
    run.output(path);
    Ok(())
}

fn check_orders(orders: &[usize]) -> Result<()> {
    if !orders.contains(&1) || orders.contains(&0) {
        return Err(SpaError::Config(format!("orders {orders:?} must include 1 and no 0")));
    }
    Ok(())
}

fn hsc(a: &HscArgs, run: &mut Run) -> Result<()> {
    check_orders(&a.orders)?;
    run.manifest_at(beside(&a.out));
    let grids = run.stage("load", |run| load_grids(&a.features, run))?;
    let (h, w) = match a.grid {
        Some(g) => (g.height, g.width),
        None => (grids[0].height(), grids[0].width()),
    };
    let m = run.stage("hsc", |_| layered_hsc(&grids, &a.orders, h, w))?;
    run.flag("n", m.n());
    run.flag("order", m.order());
    run.flag("normalized", m.is_normalized());
    run.flag("fused_layers", grids.len());
    save_tensor(&m.to_tensor(), &a.out, run)
}

fn scg(a: &ScgArgs, run: &mut Run) -> Result<()> {
    let cfg = ScgConfig::new(a.delta_h, a.delta_l, a.orders.clone())?;
    run.manifest_at(beside(&a.out));
    let (grids, cam) = run.stage("load", |run| -> Result<_> {
        Ok((load_grids(&a.features, run)?, load_map(&a.cam, run)?))
    })?;
    let hsc = run.stage("hsc", |_| layered_hsc(&grids, &cfg.orders, cam.height(), cam.width()))?;
    let out = run.stage("scg", |_| scg_map(&hsc, &cam, &cfg))?;
    run.flag("fallback_to_cam", out.fallback_to_cam);
    run.flag("object_seeds", out.object_seeds);
    run.flag("background_seeds", out.background_seeds);
    if out.fallback_to_cam {
        eprintln!("warning: no CAM pixel above delta_h; writing the normalized CAM");
    }
    save_tensor(&out.map.to_tensor(), &a.out, run)
}

fn ram_masks(a: &RamMasksArgs, run: &mut Run) -> Result<()> {
    let cfg = RamConfig::new(a.tau, a.sigma, 1.0)?;
    run.manifest_at(beside(&a.out));
    let scores = load_scores(&a.scores, run)?;
    let masks = run.stage("masks", |_| pseudo_masks(&scores, &cfg))?;
    run.flag("background_pixels", masks.background.count());
    run.flag("object_pixels", masks.object.count());
    let mut data = masks.background.to_map().values().to_vec();
    data.extend_from_slice(masks.object.to_map().values());
    let t = DenseTensor::new(vec![2, scores.height(), scores.width()], data)?;
    save_tensor(&t, &a.out, run)
}

fn loss(a: &LossArgs, run: &mut Run) -> Result<()> {
    let cfg = RamConfig::new(a.tau, a.sigma, a.alpha)?;
    let scores = load_scores(&a.scores, run)?;
    let report = run.stage("loss", |_| total_loss(&scores, a.class, &cfg))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("loss serializes"));
    if let Some(out) = &a.out {
        run.manifest_at(beside(out));
        save_json(&report, out, run)?;
    }
    Ok(())
}

fn grad(a: &LossArgs, run: &mut Run) -> Result<()> {
    let cfg = RamConfig::new(a.tau, a.sigma, a.alpha)?;
    let out = a
        .out
        .as_ref()
        .ok_or_else(|| SpaError::Config("grad needs --out".into()))?;
    run.manifest_at(beside(out));
    let scores = load_scores(&a.scores, run)?;
    let g = run.stage("grad", |_| loss_gradient(&scores, a.class, &cfg))?;
    save_tensor(&g, out, run)
}

#[derive(Serialize)]
struct BboxOut {
    bbox: BBox,
    fallback: bool,
}

fn bbox(a: &BboxArgs, run: &mut Run) -> Result<()> {
    if !(0.0..1.0).contains(&a.theta) {
        return Err(SpaError::Config(format!("theta must lie in [0, 1), got {}", a.theta)));
    }
    let map = load_map(&a.map, run)?;
    let w = a.width.unwrap_or(map.width() as u32);
    let h = a.height.unwrap_or(map.height() as u32);
    let ext = run.stage("bbox", |_| extract_bbox(&map, a.theta, w, h))?;
    run.flag("bbox_fallback", ext.fallback);
    let out = BboxOut {
        bbox: ext.bbox,
        fallback: ext.fallback,
    };
    println!("{}", serde_json::to_string(&out).expect("box serializes"));
    if let Some(p) = &a.out {
        run.manifest_at(beside(p));
        save_json(&out, p, run)?;
    }
    Ok(())
}

fn csv_rows(images: &[ImageEval]) -> String {
    let mut s = String::from("image_id,iou,peak_iou,peak_t,error_case\n");
    for img in images {
        let (peak, t) = match img.peak {
            Some(p) => (p.peak_iou.to_string(), p.peak_t.to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(s, "{},{},{peak},{t},{}", img.image_id, img.iou, img.case).unwrap();
    }
    s
}

fn eval(a: &EvalArgs, run: &mut Run) -> Result<()> {
    if !(0.0..1.0).contains(&a.theta) {
        return Err(SpaError::Config(format!("theta must lie in [0, 1), got {}", a.theta)));
    }
    let mode = match a.mode {
        ModeArg::Box => EvalMode::Box,
        ModeArg::Mask => EvalMode::Mask,
    };
    run.manifest_at(beside(&a.out));
    run.input(&a.ann);
    let records = run.stage("load", |_| load_annotations(&a.ann))?;
    let base = a.ann.parent().unwrap_or(Path::new(".")).to_path_buf();
    let result = run.stage("evaluate", |_| evaluate_dataset(&records, &base, mode, a.theta))?;
    for f in &result.failures {
        eprintln!("warning: {}: {}: {}", f.code, f.image_id, f.message);
    }
    run.flag("num_failed", result.report.num_failed);
    run.flag("failures", &result.failures);
    run.flag(
        "bbox_fallbacks",
        result.images.iter().filter(|i| i.bbox_fallback).count(),
    );
    save_json(&result.report, &a.out, run)?;
    if let Some(csv) = &a.csv {
        std::fs::write(csv, csv_rows(&result.images)).map_err(|source| SpaError::Io {
            path: csv.clone(),
            source,
        })?;
        run.output(csv);
    }
    Ok(())
}

struct SynthItem {
    record: ImageRecord,
    files: Vec<PathBuf>,
    scg_fallback: bool,
}

fn synth_one(a: &SynthArgs, i: usize) -> Result<SynthItem> {
    let shape = match a.shape {
        ShapeArg::Rect => ObjectShape::Rect,
        ShapeArg::Blob => ObjectShape::Blob,
        ShapeArg::Mixed if i.is_multiple_of(2) => ObjectShape::Rect,
        ShapeArg::Mixed => ObjectShape::Blob,
    };
    let spec = FixtureSpec {
        height: a.height,
        width: a.width,
        channels: a.channels,
        shape,
        object_fraction: a.object_fraction,
        coverage: a.coverage,
        angle_deg: a.angle,
        noise: a.noise,
        scale: a.scale,
        seed: a.seed.wrapping_add(i as u64),
    };
    let b = generate_fixture(&spec)?;
    let stem = format!("{i:04}");
    let name = |kind: &str| format!("{kind}_{stem}.spt");
    let mut files = Vec::new();
    let mut put = |t: &DenseTensor, file: &str| -> Result<()> {
        let p = a.out_dir.join(file);
        write_tensor(t, &p)?;
        files.push(p);
        Ok(())
    };
    put(&b.features.to_tensor(), &name("features"))?;
    put(&b.cam.to_tensor(), &name("cam"))?;
    put(&b.gt_mask.to_tensor(), &name("mask"))?;
    let mut scg_fallback = false;
    let map = match a.map {
        MapArg::Cam => name("cam"),
        MapArg::Scg => {
            let out = spa_core::scg::scg_from_features(&[b.features], &b.cam, &ScgConfig::default())?;
            scg_fallback = out.fallback_to_cam;
            put(&out.map.to_tensor(), &name("scg"))?;
            name("scg")
        }
    };
    let s = a.scale;
    let record = ImageRecord {
        image_id: format!("synth_{stem}"),
        width: a.width as u32 * s,
        height: a.height as u32 * s,
        gt_class: b.gt_class,
        pred_top1: None,
        pred_top5: b.pred_top5,
        gt_boxes: vec![b.gt_box],
        gt_mask: Some(name("mask")),
        map,
    };
    Ok(SynthItem {
        record,
        files,
        scg_fallback,
    })
}

fn synth(a: &SynthArgs, run: &mut Run) -> Result<()> {
    if a.count == 0 {
        return Err(SpaError::Config("--count must be at least 1".into()));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|source| SpaError::Io {
        path: a.out_dir.clone(),
        source,
    })?;
    run.manifest_at(a.out_dir.join("manifest.json"));
    run.flag("prng", spa_core::fixture::PRNG_NAME);
    let items = run.stage("generate", |_| {
        (0..a.count)
            .into_par_iter()
            .map(|i| synth_one(a, i))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut records = Vec::with_capacity(items.len());
    let mut fallbacks = 0usize;
    for item in items {
        item.files.iter().for_each(|f| run.output(f));
        fallbacks += item.scg_fallback as usize;
        records.push(item.record);
    }
    if a.map == MapArg::Scg {
        run.flag("scg_fallbacks", fallbacks);
    }
    save_json(&records, &a.out_dir.join("annotation.json"), run)
}

fn render(a: &RenderArgs, run: &mut Run) -> Result<()> {
    if a.scale == 0 {
        return Err(SpaError::Config("--scale must be at least 1".into()));
    }
    run.manifest_at(beside(&a.out));
    let map = load_map(&a.map, run)?;
    run.stage("render", |_| write_png(&map, a.scale, a.colormap, &a.out))?;
    run.output(&a.out);
    Ok(())
}
