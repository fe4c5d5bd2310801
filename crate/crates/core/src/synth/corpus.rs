//! Corpus manifests: one `role<TAB>path` line per file, roles
//! `speech`, `rir` and `noise`. Blank lines and `#` comments are ignored;
//! relative paths resolve against the manifest's directory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::{read_wav, write_wav_f32};
use crate::dsp::SAMPLE_RATE;
use crate::error::{Error, Result};
use crate::synth::generate::{self, NoiseKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    Speech,
    Rir,
    Noise,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Speech => "speech",
            Role::Rir => "rir",
            Role::Noise => "noise",
        }
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speech" => Ok(Role::Speech),
            "rir" => Ok(Role::Rir),
            "noise" => Ok(Role::Noise),
            other => Err(Error::Config(format!("unknown manifest role '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub role: Role,
    pub path: PathBuf,
}

pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (role, path) = line
            .split_once('\t')
            .ok_or_else(|| Error::Config(format!("manifest line {}: expected role<TAB>path", i + 1)))?;
        let role: Role = role.trim().parse()?;
        let path = Path::new(path.trim());
        let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
        out.push(ManifestEntry { role, path });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Source {
    pub id: String,
    pub samples: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub speech: Vec<Source>,
    pub rirs: Vec<Source>,
    pub noises: Vec<Source>,
}

/// Sizes of a generated demo corpus.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DemoCorpusSpec {
    pub n_speech: usize,
    pub n_rir: usize,
    pub n_noise: usize,
    pub speech_seconds: f64,
    pub noise_seconds: f64,
}

impl Default for DemoCorpusSpec {
    fn default() -> Self {
        DemoCorpusSpec { n_speech: 24, n_rir: 12, n_noise: 12, speech_seconds: 4.0, noise_seconds: 6.0 }
    }
}

impl Corpus {
    pub fn from_manifest(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut corpus = Corpus::default();
        let mut ids = HashSet::new();
        for entry in parse_manifest(&text, base)? {
            let id = entry
                .path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            if !ids.insert((entry.role, id.clone())) {
                return Err(Error::Config(format!("duplicate {} id '{id}'", entry.role.as_str())));
            }
            let src = Source { id, samples: read_wav(&entry.path)? };
            corpus.list_mut(entry.role).push(src);
        }
        corpus.check_usable()?;
        Ok(corpus)
    }

    /// Generates a corpus in memory from `seed`.
    pub fn synthetic(seed: u64, spec: DemoCorpusSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fs = SAMPLE_RATE as f64;
        let speech = (0..spec.n_speech)
            .map(|i| Source {
                id: format!("speech{i:03}"),
                samples: generate::speech(&mut rng, (spec.speech_seconds * fs) as usize),
            })
            .collect();
        let rirs = (0..spec.n_rir)
            .map(|i| {
                let t60 = rng.random_range(0.2..1.0);
                Source { id: format!("rir{i:03}"), samples: generate::rir(&mut rng, t60) }
            })
            .collect();
        let noises = (0..spec.n_noise)
            .map(|i| {
                let kind = NoiseKind::ALL[i % NoiseKind::ALL.len()];
                Source {
                    id: format!("noise{i:03}_{}", kind.name()),
                    samples: generate::noise(&mut rng, kind, (spec.noise_seconds * fs) as usize),
                }
            })
            .collect();
        Corpus { speech, rirs, noises }
    }

    /// Writes every source as a 32-bit float WAV under `dir` plus a
    /// `manifest.tsv`, returning the manifest path.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mut manifest = String::new();
        for role in [Role::Speech, Role::Rir, Role::Noise] {
            let sub = dir.join(role.as_str());
            std::fs::create_dir_all(&sub)?;
            for src in self.list(role) {
                let rel = format!("{}/{}.wav", role.as_str(), src.id);
                write_wav_f32(dir.join(&rel), &src.samples)?;
                writeln!(manifest, "{}\t{rel}", role.as_str()).expect("string write");
            }
        }
        let path = dir.join("manifest.tsv");
        std::fs::write(&path, manifest)?;
        Ok(path)
    }

    pub fn list(&self, role: Role) -> &[Source] {
        match role {
            Role::Speech => &self.speech,
            Role::Rir => &self.rirs,
            Role::Noise => &self.noises,
        }
    }

    fn list_mut(&mut self, role: Role) -> &mut Vec<Source> {
        match role {
            Role::Speech => &mut self.speech,
            Role::Rir => &mut self.rirs,
            Role::Noise => &mut self.noises,
        }
    }

    pub fn get(&self, role: Role, id: &str) -> Result<&Source> {
        self.list(role)
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::MissingEntry(format!("{} '{id}'", role.as_str())))
    }

    fn check_usable(&self) -> Result<()> {
        if self.speech.is_empty() || self.noises.is_empty() {
            return Err(Error::Config("a corpus needs at least one speech and one noise file".into()));
        }
        Ok(())
    }
}
