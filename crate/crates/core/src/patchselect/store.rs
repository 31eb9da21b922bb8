//! Versioned JSON dictionary files with a CRC-32 trailer line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::hmax::{Patch, PatchDictionary, SelectorKind};
use crate::pipeline::FeatureConfig;

pub const FORMAT_VERSION: u32 = 1;
const TRAILER: &str = "crc32:";

/// A dictionary plus the feature configuration it was built under.
#[derive(Clone, Debug, PartialEq)]
pub struct DictionaryFile {
    pub dictionary: PatchDictionary,
    pub feature_config: Option<FeatureConfig>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    format_version: u32,
    selector: SelectorKind,
    seed: u64,
    config_fingerprint: String,
    fingerprint: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_config: Option<FeatureConfig>,
    patches: Vec<Patch>,
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: u32,
}

pub fn save_dictionary(dict: &PatchDictionary, path: impl AsRef<Path>) -> Result<()> {
    save_dictionary_file(
        &DictionaryFile {
            dictionary: dict.clone(),
            feature_config: None,
        },
        path,
    )
}

pub fn save_dictionary_file(file: &DictionaryFile, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(file)).map_err(|e| Error::io(path, e))
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<PatchDictionary> {
    load_dictionary_file(path).map(|f| f.dictionary)
}

pub fn load_dictionary_file(path: impl AsRef<Path>) -> Result<DictionaryFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Integrity(m) => Error::Integrity(format!("{}: {m}", path.display())),
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub(crate) fn encode(file: &DictionaryFile) -> String {
    let d = &file.dictionary;
    let env = Envelope {
        format_version: FORMAT_VERSION,
        selector: d.selector(),
        seed: d.seed(),
        config_fingerprint: d.config_fingerprint().to_string(),
        fingerprint: d.fingerprint().to_string(),
        feature_config: file.feature_config.clone(),
        patches: d.patches().to_vec(),
    };
    let body = serde_json::to_string_pretty(&env).expect("dictionary serializes");
    let crc = crc32fast::hash(body.as_bytes());
    format!("{body}\n{TRAILER}{crc:08x}\n")
}

pub(crate) fn decode(bytes: &[u8]) -> Result<DictionaryFile> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| Error::Integrity("dictionary file is not valid UTF-8".into()))?;
    let trimmed = text.strip_suffix('\n').unwrap_or(text);
    let (body, tail) = trimmed
        .rsplit_once('\n')
        .ok_or_else(|| Error::Integrity("missing checksum line (file truncated?)".into()))?;
    let hex = tail
        .strip_prefix(TRAILER)
        .ok_or_else(|| Error::Integrity("missing checksum line (file truncated?)".into()))?;
    let stored = u32::from_str_radix(hex.trim(), 16)
        .map_err(|_| Error::Integrity(format!("malformed checksum `{hex}`")))?;
    let actual = crc32fast::hash(body.as_bytes());
    ensure!(
        stored == actual,
        Integrity,
        "checksum mismatch (stored {stored:08x}, computed {actual:08x})"
    );

    let probe: VersionProbe = serde_json::from_str(body)
        .map_err(|e| Error::Format(format!("dictionary header: {e}")))?;
    if probe.format_version != FORMAT_VERSION {
        return Err(Error::Version {
            found: probe.format_version,
            supported: FORMAT_VERSION,
        });
    }
    let env: Envelope =
        serde_json::from_str(body).map_err(|e| Error::Format(format!("dictionary body: {e}")))?;
    let patches = env
        .patches
        .into_iter()
        .enumerate()
        .map(|(i, p)| {
            Patch::new(p.side, p.orientations, p.values, p.origin)
                .map_err(|e| Error::Format(format!("patch {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let dictionary = PatchDictionary::new(patches, env.selector, env.seed, env.config_fingerprint)?;
    ensure!(
        dictionary.fingerprint() == env.fingerprint,
        Integrity,
        "dictionary fingerprint {} does not match its contents ({})",
        env.fingerprint,
        dictionary.fingerprint()
    );
    Ok(DictionaryFile {
        dictionary,
        feature_config: env.feature_config,
    })
}
