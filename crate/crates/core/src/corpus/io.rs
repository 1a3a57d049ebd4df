use std::fs;
use std::path::{Path, PathBuf};

use super::{format_transcription, parse_transcription, Lexicon, LexiconEntry, Posteriorgram, Transcription, Utterance};
use crate::binio::{self, Reader};
use crate::error::{Error, Result};

pub const POSTERIORGRAM_MAGIC: &str = "ANEX";
const POSTERIORGRAM_VERSION: u8 = 1;

pub fn encode_posteriorgram(x: &Posteriorgram) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(13 + 4 * x.data().len());
    out.extend_from_slice(POSTERIORGRAM_MAGIC.as_bytes());
    out.push(POSTERIORGRAM_VERSION);
    out.extend_from_slice(&binio::to_u32(x.frames(), "frames")?.to_le_bytes());
    out.extend_from_slice(&binio::to_u32(x.dim(), "dim")?.to_le_bytes());
    for v in x.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_posteriorgram(buf: &[u8]) -> Result<Posteriorgram> {
    let mut r = Reader::new(buf);
    r.expect_magic(POSTERIORGRAM_MAGIC)?;
    let version = r.u8()?;
    if version != POSTERIORGRAM_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let frames = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let n = frames.checked_mul(dim).ok_or_else(|| Error::DimensionOverflow(format!("{frames} x {dim}")))?;
    r.ensure(n, 4)?;
    let mut data = Vec::with_capacity(n);
    for _ in 0..n {
        data.push(r.f32()?);
    }
    if r.remaining() != 0 {
        return Err(Error::Malformed { what: "posteriorgram", line: 0, reason: "trailing bytes".into() });
    }
    Posteriorgram::new(frames, dim, data)
}

pub fn write_posteriorgram(path: &Path, x: &Posteriorgram) -> Result<()> {
    fs::write(path, encode_posteriorgram(x)?).map_err(|e| Error::io(path, e))
}

pub fn read_posteriorgram(path: &Path) -> Result<Posteriorgram> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_posteriorgram(&buf)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRecord {
    pub id: String,
    pub pron: Transcription,
    /// Relative to the manifest's directory.
    pub path: PathBuf,
}

pub fn format_manifest(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!("{}\t{}\t{}\n", r.id, format_transcription(&r.pron), r.path.display()));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Malformed { what: "manifest", line: n + 1, reason };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 tab-separated fields, got {}", fields.len())));
        }
        let pron = parse_transcription(fields[1]).map_err(bad)?;
        out.push(ManifestRecord { id: fields[0].to_string(), pron, path: PathBuf::from(fields[2]) });
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    fs::write(path, format_manifest(records)).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn format_lexicon(lexicon: &Lexicon) -> String {
    let mut out = String::new();
    for e in lexicon.entries() {
        out.push_str(&format!("{}\t{}\n", e.label, format_transcription(&e.pron)));
    }
    out
}

pub fn parse_lexicon(text: &str, text_dim: usize) -> Result<Lexicon> {
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| Error::Malformed { what: "lexicon", line: n + 1, reason };
        let (label, pron) = line.split_once('\t').ok_or_else(|| bad("missing tab".into()))?;
        let pron = parse_transcription(pron).map_err(bad)?;
        entries.push(LexiconEntry { label: label.to_string(), pron });
    }
    Lexicon::new(entries, text_dim)
}

pub fn write_lexicon_file(path: &Path, lexicon: &Lexicon) -> Result<()> {
    fs::write(path, format_lexicon(lexicon)).map_err(|e| Error::io(path, e))
}

pub fn read_lexicon_file(path: &Path, text_dim: usize) -> Result<Lexicon> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(&text, text_dim)
}

/// Utterances loaded from a corpus directory.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
}

pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Writes `manifest.tsv` and one `post/<id>.anex` file per utterance.
pub fn write_corpus(dir: &Path, utterances: &[Utterance]) -> Result<()> {
    let post = dir.join("post");
    fs::create_dir_all(&post).map_err(|e| Error::io(&post, e))?;
    let mut records = Vec::with_capacity(utterances.len());
    for u in utterances {
        let rel = PathBuf::from("post").join(format!("{}.anex", u.id));
        write_posteriorgram(&dir.join(&rel), &u.x)?;
        records.push(ManifestRecord { id: u.id.clone(), pron: u.y.clone(), path: rel });
    }
    write_manifest(&dir.join(MANIFEST_FILE), &records)
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let records = read_manifest(&dir.join(MANIFEST_FILE))?;
    let mut utterances = Vec::with_capacity(records.len());
    for r in records {
        let x = read_posteriorgram(&dir.join(&r.path))?;
        if x.frames() < r.pron.len() {
            return Err(Error::InvalidArgument(format!(
                "{}: {} frames for {} phones",
                r.id,
                x.frames(),
                r.pron.len()
            )));
        }
        utterances.push(Utterance { id: r.id, x, y: r.pron });
    }
    Ok(Corpus { utterances })
}
