use crate::config::{CommonArgs, GenArgs, InfoArgs, InputFormat, MaskArgs, OracleArgs, SaliencyArgs};
use crate::inputs::{collect, format_of, load_clip, load_mvf, stem, write_atomic};
use crate::report::{FileError, Report};
use anyhow::{anyhow, bail, Context, Result};
use mgmask::clipio::{parse_y4m, parse_y4m_header, peek_rvc_header, to_luma, write_ppm_frame};
use mgmask::maskgen::{check_motion_dims, generate};
use mgmask::motionfield::{estimate_mv, read_mvf, write_mvf};
use mgmask::rng::derive_seed;
use mgmask::saliency::{saliency_score, temporal_copy_reconstruct};
use mgmask::tokengrid::{read_msk, write_msk};
use mgmask::{BoxAnnotation, Clip, GridSpec, Mask3D, MotionField};
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

const CLIP_EXTENSIONS: &[&str] = &["rvc", "y4m"];

fn extensions(format: Option<InputFormat>, default: &'static [&'static str]) -> Vec<&'static str> {
    match format {
        Some(f) => vec![f.extension()],
        None => default.to_vec(),
    }
}

/// Runs `work` over the sorted inputs on a pool of `jobs` threads, keeping
/// input order in the results.
fn run_batch<F>(files: &[PathBuf], jobs: usize, work: F) -> Result<Vec<(PathBuf, Result<Value>)>>
where
    F: Fn(usize, &Path) -> Result<Value> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(|| {
        files
            .par_iter()
            .enumerate()
            .map(|(i, path)| (path.clone(), work(i, path)))
            .collect()
    }))
}

fn absorb(report: &mut Report, results: Vec<(PathBuf, Result<Value>)>) {
    for (path, result) in results {
        match result {
            Ok(v) => report.clips.push(v),
            Err(e) => report.errors.push(FileError {
                file: path.display().to_string(),
                error: format!("{e:#}"),
            }),
        }
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn common_config(c: &CommonArgs) -> Value {
    json!({
        "inputs": c.inputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "format": c.format,
        "patch": [c.patch.frames, c.patch.height, c.patch.width],
        "search_radius": c.search_radius,
        "seed": c.seed,
    })
}

fn gen_config(mut base: Value, g: &GenArgs) -> Value {
    let obj = base.as_object_mut().expect("config is an object");
    obj.insert("gamma".into(), json!(g.gamma));
    obj.insert("velocity_cap".into(), json!(g.velocity_cap));
    obj.insert("jitter_cap".into(), json!(g.jitter_cap));
    obj.insert("estimate".into(), json!(g.estimate));
    base
}

/// Mean motion magnitude over frames `1..T` (frame 0 carries no motion).
fn mean_motion(mf: &MotionField) -> f64 {
    let per_frame = mf.block_rows() * mf.block_cols();
    let moving = &mf.vectors()[per_frame..];
    if moving.is_empty() {
        0.0
    } else {
        moving.iter().map(|v| v.magnitude()).sum::<f64>() / moving.len() as f64
    }
}

fn estimate_clip(clip: &Clip, radius: usize) -> Result<MotionField> {
    Ok(estimate_mv(&to_luma(clip), radius)?)
}

/// Motion for a clip: a co-located `<stem>.mvf`, or block matching when
/// `estimate` is set.
fn motion_for(path: &Path, clip: &Clip, estimate: bool, radius: usize) -> Result<(MotionField, bool)> {
    let sidecar = path.with_extension("mvf");
    if !estimate && sidecar.is_file() {
        return Ok((load_mvf(&sidecar)?, false));
    }
    if estimate {
        return Ok((estimate_clip(clip, radius)?, true));
    }
    Err(anyhow!(
        "MissingMotion: no {} and --estimate not given",
        sidecar.display()
    ))
}

pub fn estimate(args: &CommonArgs) -> Result<bool> {
    let files = collect(&args.inputs, &extensions(args.format, CLIP_EXTENSIONS))?;
    prepare_out(&args.out)?;
    let results = run_batch(&files, args.jobs, |_, path| {
        let clip = load_clip(path, format_of(path, args.format)?)?;
        let mf = estimate_clip(&clip, args.search_radius)?;
        let name = format!("{}.mvf", stem(path));
        write_atomic(&args.out, &name, &write_mvf(&mf))?;
        Ok(json!({
            "file": path.display().to_string(),
            "frames": mf.frames(),
            "block_rows": mf.block_rows(),
            "block_cols": mf.block_cols(),
            "mean_mv_magnitude": mean_motion(&mf),
            "mvf": name,
        }))
    })?;
    let mut report = Report::new("estimate", common_config(args));
    absorb(&mut report, results);
    let n = report.clips.len();
    report.aggregate = json!({ "clips": n, "failed": report.errors.len() });
    report.write(&args.out)?;
    Ok(report.ok())
}

fn overlay(clip: &Clip, mask: &Mask3D, spec: &GridSpec) -> Clip {
    let mut out = clip.clone();
    let (_, masked) = mask.split(spec).expect("mask built on this grid");
    for index in masked {
        let tok = spec.coord(index);
        let b = spec.token_to_pixel_box(tok.slab, tok.row, tok.col).unwrap();
        for f in b.frames.clone() {
            for r in b.rows.clone() {
                for c in b.cols.clone() {
                    for ch in 0..clip.channels() {
                        let at = out.offset(f, r, c, ch);
                        out.data_mut()[at] /= 3;
                    }
                }
            }
        }
    }
    out
}

pub fn mask(args: &MaskArgs) -> Result<bool> {
    let common = &args.common;
    args.gen.params(0)?;
    let files = collect(&common.inputs, &extensions(common.format, CLIP_EXTENSIONS))?;
    prepare_out(&common.out)?;
    let results = run_batch(&files, common.jobs, |index, path| {
        let clip = load_clip(path, format_of(path, common.format)?)?;
        let spec = GridSpec::from_clip(clip.frames(), clip.height(), clip.width(), common.patch)?;
        let seed = derive_seed(common.seed, index as u64);
        let params = args.gen.params(seed)?;
        let name = stem(path);
        let mut entry = Map::new();
        entry.insert("file".into(), json!(path.display().to_string()));
        entry.insert("seed".into(), json!(seed));
        entry.insert("grid".into(), json!([spec.slabs, spec.rows, spec.cols]));

        let motion = if args.generator.needs_motion() {
            let (mf, estimated) =
                motion_for(path, &clip, args.gen.estimate, common.search_radius)?;
            check_motion_dims(&spec, &mf).map_err(|e| anyhow!("DimsMismatch: {e}"))?;
            if estimated && args.emit_mvf {
                let mvf = format!("{name}.mvf");
                write_atomic(&common.out, &mvf, &write_mvf(&mf))?;
                entry.insert("mvf".into(), json!(mvf));
            }
            Some(mf)
        } else {
            None
        };

        let out = generate(args.generator, &spec, &params, motion.as_ref())?;
        entry.insert("stats".into(), serde_json::to_value(&out.stats)?);
        if !args.no_masks {
            let msk = format!("{name}.msk");
            write_atomic(&common.out, &msk, &write_msk(&out.mask))?;
            entry.insert("mask".into(), json!(msk));
        }
        if args.emit_boxtrack {
            if let Some(track) = &out.track {
                let file = format!("{name}.boxtrack.json");
                write_atomic(&common.out, &file, track.to_json().as_bytes())?;
                entry.insert("boxtrack".into(), json!(file));
            }
        }
        if args.emit_ppm {
            let ov = overlay(&clip, &out.mask, &spec);
            let ext = if clip.channels() == 1 { "pgm" } else { "ppm" };
            for f in 0..clip.frames() {
                write_atomic(&common.out, &format!("{name}_f{f:03}.{ext}"), &write_ppm_frame(&ov, f)?)?;
            }
            entry.insert("overlay_frames".into(), json!(clip.frames()));
        }
        Ok(Value::Object(entry))
    })?;
    let mut config = gen_config(common_config(common), &args.gen);
    config["generator"] = json!(args.generator);
    let mut report = Report::new("mask", config);
    absorb(&mut report, results);
    let residue: i64 = report
        .clips
        .iter()
        .filter_map(|c| c["stats"]["residue"].as_i64())
        .map(i64::abs)
        .sum();
    report.aggregate = json!({
        "clips": report.clips.len(),
        "failed": report.errors.len(),
        "total_abs_residue": residue,
    });
    report.write(&common.out)?;
    Ok(report.ok())
}

fn annotation_for(path: &Path, boxes: Option<&Path>) -> Result<BoxAnnotation> {
    let name = format!("{}.boxes.json", stem(path));
    let file = match boxes {
        Some(b) if b.is_dir() => b.join(name),
        Some(b) => b.to_path_buf(),
        None => path.with_file_name(name),
    };
    let text = fs::read_to_string(&file)
        .map_err(|e| anyhow!("MissingAnnotation: {}: {e}", file.display()))?;
    Ok(BoxAnnotation::from_json(&text)?)
}

pub fn saliency(args: &SaliencyArgs) -> Result<bool> {
    let common = &args.common;
    let accept = extensions(common.format, &["rvc", "y4m", "mvf"]);
    let files = collect(&common.inputs, &accept)?;
    prepare_out(&common.out)?;
    let results = run_batch(&files, common.jobs, |_, path| {
        let boxes = annotation_for(path, args.boxes.as_deref())?;
        let mf = match format_of(path, common.format)? {
            InputFormat::Mvf => load_mvf(path)?,
            f => estimate_clip(&load_clip(path, f)?, common.search_radius)?,
        };
        let score = saliency_score(&mf, &boxes)?;
        Ok(json!({ "file": path.display().to_string(), "score": score }))
    })?;
    let mut config = common_config(common);
    config["boxes"] = json!(args.boxes.as_ref().map(|b| b.display().to_string()));
    let mut report = Report::new("saliency", config);
    absorb(&mut report, results);
    let scores: Vec<f64> = report.clips.iter().filter_map(|c| c["score"].as_f64()).collect();
    let mean = (!scores.is_empty()).then(|| scores.iter().sum::<f64>() / scores.len() as f64);
    report.aggregate = json!({
        "clips": scores.len(),
        "failed": report.errors.len(),
        "mean_score": mean,
    });
    report.write(&common.out)?;
    Ok(report.ok())
}

pub fn oracle(args: &OracleArgs) -> Result<bool> {
    let common = &args.common;
    args.gen.params(0)?;
    if args.generators.is_empty() {
        bail!("no generators given");
    }
    let files = collect(&common.inputs, &extensions(common.format, CLIP_EXTENSIONS))?;
    prepare_out(&common.out)?;
    let results = run_batch(&files, common.jobs, |index, path| {
        let clip = load_clip(path, format_of(path, common.format)?)?;
        let spec = GridSpec::from_clip(clip.frames(), clip.height(), clip.width(), common.patch)?;
        let seed = derive_seed(common.seed, index as u64);
        let params = args.gen.params(seed)?;
        let motion = if args.generators.iter().any(|g| g.needs_motion()) {
            let (mf, _) = motion_for(path, &clip, args.gen.estimate, common.search_radius)?;
            check_motion_dims(&spec, &mf).map_err(|e| anyhow!("DimsMismatch: {e}"))?;
            Some(mf)
        } else {
            None
        };
        let mut mse = Map::new();
        let mut fallback = Map::new();
        for &g in &args.generators {
            let out = generate(g, &spec, &params, motion.as_ref())?;
            let rec = temporal_copy_reconstruct(&clip, &out.mask, &spec)?;
            mse.insert(g.name().into(), json!(rec.mse));
            fallback.insert(g.name().into(), json!(rec.fallback_fill));
        }
        Ok(json!({
            "file": path.display().to_string(),
            "seed": seed,
            "mse": mse,
            "fallback_fill": fallback,
        }))
    })?;
    let mut config = gen_config(common_config(common), &args.gen);
    config["generators"] = json!(args.generators);
    let mut report = Report::new("oracle", config);
    absorb(&mut report, results);
    let mut mean: BTreeMap<&str, Value> = BTreeMap::new();
    for g in &args.generators {
        let values: Vec<f64> = report
            .clips
            .iter()
            .filter_map(|c| c["mse"][g.name()].as_f64())
            .collect();
        let m = (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64);
        mean.insert(g.name(), json!(m));
    }
    report.aggregate = json!({
        "clips": report.clips.len(),
        "failed": report.errors.len(),
        "mean_mse": mean,
    });
    report.write(&common.out)?;
    Ok(report.ok())
}

fn describe(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let file = path.display().to_string();
    if bytes.starts_with(b"RVC1") {
        let (t, h, w, c) = peek_rvc_header(&bytes)?;
        Ok(json!({"file": file, "format": "rvc", "frames": t, "height": h, "width": w, "channels": c}))
    } else if bytes.starts_with(b"YUV4MPEG2") {
        let (header, _) = parse_y4m_header(&bytes)?;
        let frames = parse_y4m(&bytes)?.frames();
        Ok(json!({
            "file": file, "format": "y4m", "frames": frames,
            "height": header.height, "width": header.width, "colorspace": header.colorspace,
        }))
    } else if bytes.starts_with(b"MVF1") {
        let mf = read_mvf(&bytes)?;
        Ok(json!({
            "file": file, "format": "mvf", "frames": mf.frames(),
            "block_rows": mf.block_rows(), "block_cols": mf.block_cols(),
            "mean_mv_magnitude": mean_motion(&mf),
        }))
    } else if bytes.starts_with(b"MSK1") {
        let mask = read_msk(&bytes, Default::default())?;
        let spec = mask.spec();
        Ok(json!({
            "file": file, "format": "msk", "slabs": spec.slabs, "rows": spec.rows,
            "cols": spec.cols, "target_masked": mask.target_masked(),
        }))
    } else {
        bail!("unrecognized file format")
    }
}

pub fn info(args: &InfoArgs) -> Result<bool> {
    let files = collect(&args.inputs, &["rvc", "y4m", "mvf", "msk"])?;
    let mut report = Report::new("info", json!({}));
    for path in &files {
        match describe(path) {
            Ok(v) => report.clips.push(v),
            Err(e) => report.errors.push(FileError {
                file: path.display().to_string(),
                error: format!("{e:#}"),
            }),
        }
    }
    print!("{}", report.to_json());
    for e in &report.errors {
        eprintln!("{}: {}", e.file, e.error);
    }
    Ok(report.ok())
}
