//! Training driver: dataset loading, line-delimited step log, and periodic
//! checkpoints around the core trainer.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use transfuse_core::model::TransFuseNet;
use transfuse_core::trainer::{StepRecord, TrainConfig, Trainer};

use crate::checkpoint::save_checkpoint;
use crate::config::RunConfigFile;
use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};

pub const LOG_FILE: &str = "train_log.jsonl";
pub const TIMING_FILE: &str = "timing.jsonl";
pub const CONFIG_FILE: &str = "run_config.toml";
pub const FINAL_CHECKPOINT: &str = "checkpoint_final.tfck";
pub const LAST_GOOD_CHECKPOINT: &str = "checkpoint_last_good.tfck";

pub fn epoch_checkpoint_name(epoch: usize) -> String {
    format!("checkpoint_epoch{epoch:04}.tfck")
}

/// Per-step records of a run, as written one JSON object per line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut records = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec = serde_json::from_str(&line)
                .map_err(|e| Error::Io { path: path.to_path_buf(), source: std::io::Error::other(e) })?;
            records.push(rec);
        }
        Ok(TrainLog { records })
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss.total).collect()
    }
}

#[derive(Serialize)]
struct TimingLine {
    epoch: usize,
    steps: usize,
    elapsed_secs: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: TransFuseNet,
    pub log: TrainLog,
    pub final_checkpoint: PathBuf,
    pub checkpoints: Vec<PathBuf>,
}

struct Writer {
    path: PathBuf,
    inner: BufWriter<File>,
}

impl Writer {
    fn create(path: PathBuf) -> Result<Self> {
        let f = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Writer { inner: BufWriter::new(f), path })
    }

    fn line<T: Serialize>(&mut self, value: &T) -> Result<()> {
        let json = serde_json::to_string(value).expect("record serializes");
        writeln!(self.inner, "{json}").map_err(|e| Error::io(&self.path, e))
    }

    fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains on `manifest` and writes the log, timings, config copy and
/// checkpoints into `out_dir`. The log holds no wall-clock values, so two
/// runs with the same seed produce byte-identical logs; timings go to a
/// separate file.
///
/// On a numerical failure the untouched pre-step model is saved as
/// `checkpoint_last_good.tfck` before the error is returned.
pub fn train(manifest: &DatasetManifest, config: TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    config.validate()?;
    let mut manifest = manifest.clone();
    manifest.target_size = config.image_size;
    let images = manifest.load_images()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cfg_path = out_dir.join(CONFIG_FILE);
    fs::write(&cfg_path, RunConfigFile::from_train_config(&config).to_toml()).map_err(|e| Error::io(&cfg_path, e))?;

    let mut log = Writer::create(out_dir.join(LOG_FILE))?;
    let mut timing = Writer::create(out_dir.join(TIMING_FILE))?;
    let mut trainer = Trainer::new(config, images.len())?;
    let mut records = Vec::with_capacity(trainer.total_steps());
    let mut checkpoints = Vec::new();
    let started = Instant::now();

    for epoch in 0..trainer.config.epochs {
        let mut write_err = None;
        let result = trainer.run_epoch(&images, epoch, &mut |rec| {
            if write_err.is_none() {
                write_err = log.line(rec).err();
            }
            records.push(rec.clone());
        });
        if let Some(e) = write_err {
            return Err(e);
        }
        if let Err(e) = result {
            log.flush()?;
            if matches!(e, transfuse_core::Error::Numerical(_)) {
                save_checkpoint(&out_dir.join(LAST_GOOD_CHECKPOINT), &trainer.model)?;
            }
            return Err(e.into());
        }
        timing.line(&TimingLine { epoch, steps: trainer.steps_taken(), elapsed_secs: started.elapsed().as_secs_f64() })?;
        let every = trainer.config.checkpoint_every;
        if every > 0 && (epoch + 1) % every == 0 {
            let path = out_dir.join(epoch_checkpoint_name(epoch + 1));
            save_checkpoint(&path, &trainer.model)?;
            checkpoints.push(path);
        }
    }
    log.flush()?;
    timing.flush()?;
    let final_checkpoint = out_dir.join(FINAL_CHECKPOINT);
    save_checkpoint(&final_checkpoint, &trainer.model)?;
    Ok(TrainOutcome { model: trainer.model, log: TrainLog { records }, final_checkpoint, checkpoints })
}
