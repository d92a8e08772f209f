//! Seeded synthetic sound-event corpus: a stand-in for a real labelled
//! collection when none is supplied.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::CorpusConfig;
use super::manifest::{ClipManifest, ClipRecord};
use crate::io::wav::{write_wav, WavFormat};
use crate::{rng, Error, Result};

/// Eight signal families; classes beyond eight reuse them in higher bands.
fn synth(class: usize, r: &mut rng::Rng, len: usize, fs: f64) -> Vec<f64> {
    let band = 1.0 + (class / 8) as f64 * 0.35;
    let t = |n: usize| n as f64 / fs;
    let dur = len as f64 / fs;
    let mut x: Vec<f64> = match class % 8 {
        0 => {
            let f = band * r.random_range(300.0..600.0);
            let decay = r.random_range(1.0..3.0);
            (0..len).map(|n| (2.0 * PI * f * t(n)).sin() * (-decay * t(n)).exp()).collect()
        }
        1 => {
            let (f0, f1) = (band * r.random_range(300.0..600.0), band * r.random_range(2000.0..3000.0));
            (0..len)
                .map(|n| (2.0 * PI * (f0 * t(n) + 0.5 * (f1 - f0) / dur * t(n) * t(n))).sin())
                .collect()
        }
        2 => {
            let (f0, f1) = (band * r.random_range(2500.0..3500.0), band * r.random_range(400.0..800.0));
            (0..len)
                .map(|n| (2.0 * PI * (f0 * t(n) + 0.5 * (f1 - f0) / dur * t(n) * t(n))).sin())
                .collect()
        }
        3 => {
            // one-pole low-pass noise
            let a = r.random_range(0.9..0.97);
            let mut y = 0.0;
            (0..len)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(r);
                    y = a * y + (1.0 - a) * v;
                    y
                })
                .collect()
        }
        4 => {
            // first-difference high-pass noise
            let mut prev = 0.0;
            (0..len)
                .map(|_| {
                    let v: f64 = StandardNormal.sample(r);
                    let y = v - prev;
                    prev = v;
                    y
                })
                .collect()
        }
        5 => {
            let fc = band * r.random_range(1000.0..2000.0);
            let fm = r.random_range(4.0..9.0);
            (0..len)
                .map(|n| (2.0 * PI * fc * t(n)).sin() * (0.5 + 0.5 * (2.0 * PI * fm * t(n)).sin()))
                .collect()
        }
        6 => {
            let f0 = band * r.random_range(150.0..250.0);
            (0..len)
                .map(|n| (1..=8).map(|h| (2.0 * PI * h as f64 * f0 * t(n)).sin() / h as f64).sum())
                .collect()
        }
        _ => {
            // decaying click train
            let period = (fs / r.random_range(6.0..14.0)) as usize;
            let f = band * r.random_range(800.0..1600.0);
            (0..len)
                .map(|n| {
                    let k = (n % period) as f64 / fs;
                    (2.0 * PI * f * k).sin() * (-k * 200.0).exp()
                })
                .collect()
        }
    };
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v *= 0.1 / rms);
    }
    x
}

/// Clip `index` of `class`, identical to the one [`generate_corpus`] writes
/// for a corpus with `clips_per_class` clips per class.
pub fn synth_clip(
    class: usize,
    index: usize,
    clips_per_class: usize,
    seconds: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    let fs = sample_rate as f64;
    let len = (seconds * fs).round() as usize;
    if len == 0 {
        return Err(Error::Config("clip would be empty".into()));
    }
    let mut r = rng::stream(seed, "corpus", (class * clips_per_class + index) as u64);
    Ok(synth(class, &mut r, len, fs))
}

/// Writes `clips/<id>.wav` and `manifest.csv` under `dir`. Clip `i` of each
/// class goes to fold `i mod n_folds`.
pub fn generate_corpus(dir: impl AsRef<Path>, cfg: &CorpusConfig, sample_rate: u32, seed: u64) -> Result<ClipManifest> {
    let dir = dir.as_ref();
    let clips = dir.join("clips");
    std::fs::create_dir_all(&clips).map_err(|e| Error::io(&clips, e))?;
    if (cfg.clip_seconds * sample_rate as f64).round() < 1.0 {
        return Err(Error::Config("clips would be empty".into()));
    }
    let mut rows = Vec::new();
    for class in 0..cfg.n_classes {
        for i in 0..cfg.clips_per_class {
            let clip_id = format!("c{class:02}_{i:03}");
            let x = synth_clip(class, i, cfg.clips_per_class, cfg.clip_seconds, sample_rate, seed)?;
            let rel = Path::new("clips").join(format!("{clip_id}.wav"));
            write_wav(dir.join(&rel), &[&x], sample_rate, WavFormat::Float32)?;
            rows.push(ClipRecord { clip_id, path: rel, label: class, fold: i % cfg.n_folds });
        }
    }
    let manifest = ClipManifest::new(rows, dir)?;
    manifest.write(dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::wav::read_wav;

    #[test]
    fn corpus_is_reproducible_and_labelled() {
        let cfg = CorpusConfig { n_classes: 9, clips_per_class: 2, n_folds: 2, clip_seconds: 0.1 };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ma = generate_corpus(a.path(), &cfg, 16_000, 4).unwrap();
        let mb = generate_corpus(b.path(), &cfg, 16_000, 4).unwrap();
        assert_eq!(ma.len(), 18);
        assert_eq!(ma.n_classes(), 9);
        assert_eq!(ma.n_folds(), 2);
        assert_eq!(ma.content_hash().unwrap(), mb.content_hash().unwrap());
        let clip = read_wav(ma.resolve(&ma.rows()[5])).unwrap();
        assert_eq!(clip.n_channels(), 1);
        assert_eq!(clip.len(), 1600);
        let rms = (clip.channels[0].iter().map(|v| v * v).sum::<f64>() / 1600.0).sqrt();
        assert!((rms - 0.1).abs() < 1e-6);
        let reread = ClipManifest::read(a.path().join("manifest.csv")).unwrap();
        assert_eq!(reread.rows(), ma.rows());
    }
}
