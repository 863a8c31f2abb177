use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;

use super::config::{Decoder, RunConfig};
use super::manifest::{
    AugmentEntry, AugmentManifest, LoadedManifest, Manifest, ManifestEntry, AUGMENT_FILE, MANIFEST_FILE,
};
use super::{CliError, Command};
use crate::corpus::{frame_grid, gen_track_score, render_shifted, render_track, track_id, Split};
use crate::em::{estimate_labels, run_countem, snap_windows, EmTrack, EvalTrack};
use crate::error::{Error, Result};
use crate::events::{compute_histograms, corrupt_histograms, EventTrack, HistogramFile, Histogram};
use crate::grid::{events_to_labels, labels_to_events, write_matrix, LabelMatrix, MatrixFile, Posteriorgram};
use crate::io::{read_json, write_atomic, write_json};
use crate::metrics::{EvalReport, ONSET_TOLERANCE_S};
use crate::model::{
    load_checkpoint, save_checkpoint, train, Architecture, ShiftedCopy, TrackAudio, TrainConfig,
    TrainingSet, TranscriberState,
};
use crate::seeding::derive_seed;
use crate::synth::{read_wav, write_wav, Features};

const INIT_STREAM: u64 = 0x11;
const PRETRAIN_STREAM: u64 = 0x12;
const EM_STREAM: u64 = 0x13;
const NOISE_STREAM: u64 = 0x14;

pub(super) fn dispatch(cfg: &RunConfig, command: Command) -> Result<(), CliError> {
    let p = &cfg.paths;
    match command {
        Command::Gen { out } => cmd_gen(cfg, &out.unwrap_or_else(|| p.corpus_dir.clone())),
        Command::Histify {
            manifest,
            window,
            noise,
            noise_seed,
            split,
            out,
        } => {
            let noise = noise.unwrap_or(cfg.histogram.noise);
            if !(0.0..1.0).contains(&noise) {
                return Err(CliError::Usage("--noise must lie in [0, 1)".into()));
            }
            cmd_histify(
                &manifest.unwrap_or_else(|| p.manifest()),
                window.unwrap_or(cfg.histogram.window),
                noise,
                noise_seed.unwrap_or_else(|| derive_seed(&[cfg.seed(), NOISE_STREAM])),
                split,
                &out.unwrap_or_else(|| p.histogram_dir.clone()),
            )
        }
        Command::Pretrain { manifest, out } => cmd_pretrain(
            cfg,
            &manifest.unwrap_or_else(|| p.manifest()),
            &out.unwrap_or_else(|| p.pretrained.clone()),
        ),
        Command::TrainEm {
            manifest,
            histograms,
            init,
            max_iterations,
            out,
        } => {
            if max_iterations == Some(0) {
                return Err(CliError::Usage("--max-iterations must be at least 1".into()));
            }
            cmd_train_em(
                cfg,
                &manifest.unwrap_or_else(|| p.manifest()),
                &histograms.unwrap_or_else(|| p.histogram_dir.clone()),
                &init.unwrap_or_else(|| p.pretrained.clone()),
                max_iterations,
                &out.unwrap_or_else(|| p.em_dir.clone()),
            )
        }
        Command::Predict {
            manifest,
            checkpoint,
            split,
            decoder,
            histograms,
            out,
        } => cmd_predict(
            cfg,
            &manifest.unwrap_or_else(|| p.manifest()),
            &checkpoint.unwrap_or_else(|| p.em_checkpoint()),
            split,
            decoder.unwrap_or(cfg.predict.decoder),
            &histograms.unwrap_or_else(|| p.histogram_dir.clone()),
            &out.unwrap_or_else(|| p.predictions_dir.clone()),
        ),
        Command::Eval {
            manifest,
            predictions,
            split,
            out,
        } => cmd_eval(
            &manifest.unwrap_or_else(|| p.manifest()),
            &predictions.unwrap_or_else(|| p.predictions_dir.clone()),
            split,
            &out.unwrap_or_else(|| p.report.clone()),
        ),
    }
    .map_err(CliError::from)
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("missing input {}", path.display())))
    }
}

fn histogram_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    let c = &cfg.corpus;
    let sr = c.features.sample_rate;
    for t in [&c.timbre_a, &c.timbre_b] {
        if t.sample_rate != sr {
            return Err(Error::Invalid(format!(
                "timbre sample rate {} differs from feature sample rate {sr}",
                t.sample_rate
            )));
        }
    }
    let seed = cfg.seed();
    let jobs: Vec<(Split, usize)> = Split::ALL
        .iter()
        .flat_map(|&s| (0..c.tracks(s)).map(move |i| (s, i)))
        .collect();
    let written = jobs
        .par_iter()
        .map(|&(split, index)| -> Result<(ManifestEntry, Vec<AugmentEntry>)> {
            let id = track_id(split, index);
            let events = gen_track_score(c, seed, split, index)?;
            let audio = format!("wav/{id}.wav");
            let events_rel = format!("events/{id}.json");
            write_wav(&out.join(&audio), &render_track(c, seed, split, index, &events)?, sr)?;
            write_json(&out.join(&events_rel), &events).map_err(|e| Error::io(out.join(&events_rel), e))?;
            let mut copies = Vec::new();
            if split == Split::Train {
                for (k, (shift, samples)) in render_shifted(c, seed, split, index, &events)?.into_iter().enumerate() {
                    let rel = format!("wav/{id}.shift{k:02}.wav");
                    write_wav(&out.join(&rel), &samples, sr)?;
                    copies.push(AugmentEntry {
                        track_id: id.clone(),
                        shift_semitones: shift,
                        audio: rel,
                    });
                }
            }
            let entry = ManifestEntry {
                track_id: id,
                split,
                index,
                audio,
                events: events_rel,
                duration_s: events.duration_s(),
                notes: events.len(),
            };
            Ok((entry, copies))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tracks = Vec::with_capacity(written.len());
    let mut augment = AugmentManifest::default();
    for (entry, copies) in written {
        tracks.push(entry);
        augment.copies.extend(copies);
    }
    let manifest = Manifest {
        seed,
        sample_rate: sr,
        pitch_count: c.score.pitch_count,
        tracks,
    };
    let path = out.join(MANIFEST_FILE);
    write_json(&out.join(AUGMENT_FILE), &augment).map_err(|e| Error::io(out.join(AUGMENT_FILE), e))?;
    write_json(&path, &manifest).map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {} tracks to {}", manifest.tracks.len(), out.display());
    Ok(())
}

pub fn cmd_histify(
    manifest: &Path,
    window: crate::events::WindowSpec,
    noise: f64,
    noise_seed: u64,
    split: Split,
    out: &Path,
) -> Result<()> {
    require(manifest)?;
    let m = LoadedManifest::load(manifest)?;
    let entries: Vec<&ManifestEntry> = m.split(split).collect();
    entries.par_iter().try_for_each(|e| -> Result<()> {
        let events = m.read_events(e)?;
        let hs = compute_histograms(&events, window)?;
        let hs = corrupt_histograms(&hs, noise, derive_seed(&[noise_seed, e.index as u64]))?;
        let path = histogram_path(out, &e.track_id);
        let doc = HistogramFile::new(events.pitch_count(), window, &hs);
        write_json(&path, &doc).map_err(|err| Error::io(&path, err))
    })?;
    log::info!("wrote {} histogram files to {}", entries.len(), out.display());
    Ok(())
}

/// Reads a track's audio and computes its features on the track's grid.
fn load_features(m: &LoadedManifest, extractor: &Features, rel: &str, events: &EventTrack) -> Result<Array2<f32>> {
    let path = m.resolve(rel);
    require(&path)?;
    let (samples, sr) = read_wav(&path)?;
    if sr != m.manifest.sample_rate {
        return Err(Error::Invalid(format!(
            "{}: sample rate {sr}, manifest says {}",
            path.display(),
            m.manifest.sample_rate
        )));
    }
    let grid = frame_grid(events)?;
    Ok(extractor.extract(&samples, grid.frames())?)
}

struct LoadedTrack {
    entry: ManifestEntry,
    events: EventTrack,
    labels: LabelMatrix,
    audio: TrackAudio,
}

fn load_split(cfg: &RunConfig, m: &LoadedManifest, split: Split, with_copies: bool) -> Result<Vec<LoadedTrack>> {
    let extractor = Features::new(&cfg.corpus.features)?;
    let mut by_track: HashMap<&str, Vec<&AugmentEntry>> = HashMap::new();
    let augment = if with_copies { m.augment()? } else { AugmentManifest::default() };
    for a in &augment.copies {
        by_track.entry(a.track_id.as_str()).or_default().push(a);
    }
    let entries: Vec<&ManifestEntry> = m.split(split).collect();
    entries
        .par_iter()
        .map(|e| {
            let events = m.read_events(e)?;
            let grid = frame_grid(&events)?;
            let labels = events_to_labels(&events, grid)?.labels;
            let features = load_features(m, &extractor, &e.audio, &events)?;
            let copies = by_track
                .get(e.track_id.as_str())
                .map(|v| v.as_slice())
                .unwrap_or_default()
                .iter()
                .map(|a| {
                    Ok(ShiftedCopy {
                        shift_semitones: a.shift_semitones,
                        features: load_features(m, &extractor, &a.audio, &events)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(LoadedTrack {
                entry: (*e).clone(),
                events,
                labels,
                audio: TrackAudio {
                    track_id: e.track_id.clone(),
                    features,
                    copies,
                },
            })
        })
        .collect()
}

fn check_architecture(state: &TranscriberState, cfg: &RunConfig, m: &LoadedManifest) -> Result<()> {
    let arch = state.architecture();
    let expected = (cfg.corpus.features.bands, m.manifest.pitch_count);
    if (arch.feature_width, arch.pitches) != expected {
        return Err(crate::model::ModelError::ShapeMismatch {
            what: "checkpoint (features, pitches)",
            expected,
            found: (arch.feature_width, arch.pitches),
        }
        .into());
    }
    Ok(())
}

pub fn cmd_pretrain(cfg: &RunConfig, manifest: &Path, out: &Path) -> Result<()> {
    require(manifest)?;
    let m = LoadedManifest::load(manifest)?;
    let tracks = load_split(cfg, &m, Split::Pretrain, false)?;
    if tracks.is_empty() {
        return Err(Error::Invalid("the pretrain split is empty".into()));
    }
    let arch = Architecture {
        feature_width: cfg.corpus.features.bands,
        context: cfg.model.context,
        hidden: cfg.model.hidden,
        pitches: m.manifest.pitch_count,
    };
    let seed = cfg.seed();
    let mut state = TranscriberState::init(arch, &cfg.model, derive_seed(&[seed, INIT_STREAM]))?;
    let labels: Vec<LabelMatrix> = tracks.iter().map(|t| t.labels.clone()).collect();
    let set = TrainingSet::new(tracks.iter().map(|t| &t.audio), &labels)?;
    let trace = train(
        &mut state,
        &set,
        &TrainConfig {
            steps: cfg.pretrain.steps,
            batch_frames: cfg.pretrain.batch_frames,
            loss: cfg.pretrain.loss,
            seed: derive_seed(&[seed, PRETRAIN_STREAM]),
        },
    )?;
    if let Some(last) = trace.last() {
        log::info!("pretrained for {} steps, final loss {last:.5}", trace.len());
    }
    save_checkpoint(out, &state)?;
    Ok(())
}

fn read_histograms(path: &Path) -> Result<Vec<Histogram>> {
    require(path)?;
    let doc: HistogramFile = read_json(path).map_err(|e| Error::io(path, e))?;
    doc.histograms()
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

pub fn cmd_train_em(
    cfg: &RunConfig,
    manifest: &Path,
    histograms: &Path,
    init: &Path,
    max_iterations: Option<usize>,
    out: &Path,
) -> Result<()> {
    require(manifest)?;
    require(histograms)?;
    require(init)?;
    let m = LoadedManifest::load(manifest)?;
    let model = load_checkpoint(init)?;
    check_architecture(&model, cfg, &m)?;
    let train_tracks = load_split(cfg, &m, Split::Train, true)?;
    let test_tracks = load_split(cfg, &m, Split::Test, false)?;
    let em_tracks = train_tracks
        .iter()
        .map(|t| {
            let hs = read_histograms(&histogram_path(histograms, &t.entry.track_id))?;
            EmTrack::new(&t.audio, hs, Some(&t.events))
        })
        .collect::<Result<Vec<_>>>()?;
    let test: Vec<EvalTrack> = test_tracks
        .iter()
        .map(|t| EvalTrack {
            audio: &t.audio,
            reference: &t.events,
        })
        .collect();
    let mut em = cfg.em.clone();
    em.seed = derive_seed(&[cfg.seed(), EM_STREAM]);
    if let Some(n) = max_iterations {
        em.max_iterations = n;
    }
    let outcome = run_countem(model, &em_tracks, &test, &em)?;

    save_checkpoint(&out.join("model.ckpt"), &outcome.model)?;
    for (t, y) in train_tracks.iter().zip(&outcome.labels) {
        write_matrix(
            &out.join("labels").join(format!("{}.tpgm", t.entry.track_id)),
            &MatrixFile::Labels(y.clone()),
        )?;
    }
    let mut lines = String::new();
    for r in &outcome.reports {
        lines.push_str(&serde_json::to_string(r).map_err(|e| Error::Invalid(e.to_string()))?);
        lines.push('\n');
    }
    let report = out.join("report.jsonl");
    write_atomic(&report, lines.as_bytes()).map_err(|e| Error::io(&report, e))?;
    print!("{lines}");
    Ok(())
}

pub fn cmd_predict(
    cfg: &RunConfig,
    manifest: &Path,
    checkpoint: &Path,
    split: Split,
    decoder: Decoder,
    histograms: &Path,
    out: &Path,
) -> Result<()> {
    require(manifest)?;
    require(checkpoint)?;
    if decoder == Decoder::Histogram {
        require(histograms)?;
    }
    let m = LoadedManifest::load(manifest)?;
    let model = load_checkpoint(checkpoint)?;
    check_architecture(&model, cfg, &m)?;
    let tracks = load_split(cfg, &m, split, false)?;
    tracks.par_iter().try_for_each(|t| -> Result<()> {
        let z: Posteriorgram = model.predict(t.audio.features.view())?;
        let id = &t.entry.track_id;
        write_matrix(&out.join(format!("{id}.tpgm")), &MatrixFile::Posteriorgram(z.clone()))?;
        let events = match decoder {
            Decoder::Threshold => cfg.predict.threshold.decode(&z)?,
            Decoder::Histogram => {
                let hs = read_histograms(&histogram_path(histograms, id))?;
                let windows = snap_windows(&hs, z.grid())?;
                let (labels, _) = estimate_labels(&z, &hs, &windows, &cfg.em.peakpick)?;
                labels_to_events(&labels)?
            }
        };
        let path = out.join(format!("{id}.json"));
        write_json(&path, &events).map_err(|e| Error::io(&path, e))
    })?;
    log::info!("wrote predictions for {} tracks to {}", tracks.len(), out.display());
    Ok(())
}

pub fn cmd_eval(manifest: &Path, predictions: &Path, split: Split, out: &Path) -> Result<()> {
    require(manifest)?;
    require(predictions)?;
    let m = LoadedManifest::load(manifest)?;
    let triples = m
        .split(split)
        .map(|e| {
            let reference = m.read_events(e)?;
            let path = predictions.join(format!("{}.json", e.track_id));
            require(&path)?;
            let estimate: EventTrack = read_json(&path).map_err(|err| Error::io(&path, err))?;
            Ok((e.track_id.clone(), reference, estimate))
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::build(&triples, ONSET_TOLERANCE_S)?;
    write_json(out, &report).map_err(|e| Error::io(out, e))?;
    let csv = out.with_extension("csv");
    write_atomic(&csv, report.to_csv().as_bytes()).map_err(|e| Error::io(&csv, e))?;
    println!(
        "F {:.4} (P {:.4}, R {:.4}), F-histogram {:.4} over {} tracks",
        report.onset_summary.f_score,
        report.onset_summary.precision,
        report.onset_summary.recall,
        report.histogram_summary.f_score,
        triples.len()
    );
    Ok(())
}
