//! The three subcommands as library calls.

use std::path::{Path, PathBuf};

use photostereo_core::synthetic::render_ground_truth;
use photostereo_core::training::{SolveResult, Solver};

use crate::config::RunConfig;
use crate::dataset::{load_dataset, mask_image, save_dataset, write_image, ImageFormat};
use crate::error::{create_dir, write, Error, Result};
use crate::evaluate::SHADOW_GT_DIR;
use crate::formats::{write_pfm, Image};
use crate::output::{periodic_checkpoint_path, write_result, Checkpoint, CHECKPOINT, CHECKPOINT_DIR};
use crate::preprocess::preprocess;
use crate::scene::SceneFile;

pub const DEPTH_GT: &str = "depth_gt.pfm";
pub const SCENE_COPY: &str = "scene.toml";
pub const CONFIG_COPY: &str = "config.toml";

/// Renders a scene file into a dataset directory, with ground-truth depth
/// and hard-shadow maps alongside.
pub fn render(scene_path: &Path, out: &Path) -> Result<()> {
    let file = SceneFile::load(scene_path)?;
    render_scene(&file, out)
}

pub fn render_scene(file: &SceneFile, out: &Path) -> Result<()> {
    let r = render_ground_truth(&file.scene())?;
    save_dataset(out, &r.observations, ImageFormat::Pfm)?;
    let (w, h) = (file.width, file.height);
    write_pfm(&out.join(DEPTH_GT), &Image::new(w, h, 1, r.depth.clone()))?;
    let dir = out.join(SHADOW_GT_DIR);
    create_dir(&dir)?;
    for (j, hard) in r.shadows.iter().enumerate() {
        let lit = Image::new(w, h, 1, hard.iter().map(|s| if *s { 0.0 } else { 1.0 }).collect());
        write_image(&dir.join(format!("{:03}.png", j + 1)), &lit, ImageFormat::Png8)?;
    }
    write_image(&out.join("mask.png"), &mask_image(&r.observations.mask), ImageFormat::Png8)?;
    write(&out.join(SCENE_COPY), file.to_toml())
}

#[derive(Clone, Debug, Default)]
pub struct SolveOptions {
    pub config: RunConfig,
    /// Replaces the stage lengths with this many epochs split 1:2:1.
    pub epochs: Option<usize>,
    pub resume: Option<PathBuf>,
}

/// Loads, preprocesses, optimizes, and writes every output into `out`.
pub fn solve(dataset: &Path, out: &Path, opts: &SolveOptions) -> Result<SolveResult> {
    let mut cfg = opts.config.clone();
    if let Some(n) = opts.epochs {
        cfg.solve = cfg.solve.with_total_epochs(n);
    }
    cfg.validate().map_err(|msg| Error::format(dataset, msg))?;
    let obs = preprocess(&load_dataset(dataset)?, &cfg.preprocess)?;
    let mut solver = match &opts.resume {
        None => Solver::new(&obs, cfg.solve.clone())?,
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            Solver::resume(&obs, cfg.solve.clone(), ck.state)?
        }
    };
    if solver.silhouette_empty() {
        log::warn!("no silhouette pixels; the silhouette term is zero");
    }
    create_dir(out)?;
    write(&out.join(CONFIG_COPY), cfg.to_toml())?;
    let every = cfg.output.checkpoint_every;
    if every > 0 {
        create_dir(&out.join(CHECKPOINT_DIR))?;
    }
    while !solver.is_done() {
        let log = solver.step()?;
        if every > 0 && (log.epoch + 1) % every == 0 {
            let ck = Checkpoint {
                config: cfg.solve.clone(),
                state: solver.state().clone(),
            };
            ck.save(&periodic_checkpoint_path(out, log.epoch + 1))?;
        }
    }
    let result = solver.result()?;
    write_result(out, &result)?;
    Checkpoint {
        config: cfg.solve.clone(),
        state: solver.state().clone(),
    }
    .save(&out.join(CHECKPOINT))?;
    Ok(result)
}
