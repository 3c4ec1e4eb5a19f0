//! On-disk sequences: binary PGM frames, a box CSV and the scene JSON.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use super::{Image, SceneConfig, SyntheticSequence};
use crate::bbox::BBox;
use crate::error::{input_err, Error, Result};

pub const ANNOTATION_FILE: &str = "groundtruth.csv";
pub const SCENE_FILE: &str = "scene.json";
pub const ANNOTATION_HEADER: &str = "frame,x,y,w,h";

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.pgm")
}

/// Encodes values in [0, 1] as an 8-bit binary PGM.
pub fn encode_pgm(width: usize, height: usize, values: &[f32]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

pub fn write_pgm(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    fs::write(path, encode_pgm(image.width(), image.height(), image.data()))?;
    Ok(())
}

fn pgm_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut token = String::new();
    let mut byte = [0u8; 1];
    loop {
        r.read_exact(&mut byte)?;
        let ch = byte[0] as char;
        if ch == '#' {
            let mut comment = String::new();
            r.read_line(&mut comment)?;
            continue;
        }
        if ch.is_ascii_whitespace() {
            if token.is_empty() {
                continue;
            }
            return Ok(token);
        }
        token.push(ch);
    }
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let mut r = BufReader::new(fs::File::open(path)?);
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    if pgm_token(&mut r)? != "P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let mut dim = || -> Result<usize> { pgm_token(&mut r)?.parse().map_err(|_| bad("bad header")) };
    let (w, h, maxval) = (dim()?, dim()?, dim()?);
    if maxval != 255 {
        return Err(bad("only maxval 255 is supported"));
    }
    let mut bytes = vec![0u8; w * h];
    r.read_exact(&mut bytes)?;
    Image::new(w, h, bytes.iter().map(|&b| b as f32 / 255.0).collect())
}

pub fn write_annotations(path: impl AsRef<Path>, boxes: &[BBox]) -> Result<()> {
    let mut out = String::from(ANNOTATION_HEADER);
    out.push('\n');
    for (i, b) in boxes.iter().enumerate() {
        out.push_str(&format!("{i},{},{},{},{}\n", b.x, b.y, b.w, b.h));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<BBox>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(ANNOTATION_HEADER) {
        return input_err(format!("{}: expected header '{ANNOTATION_HEADER}'", path.display()));
    }
    let mut boxes = Vec::new();
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f32>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed.as_deref() {
            Some([frame, x, y, w, h]) if *frame as usize == i => boxes.push(BBox::new(*x, *y, *w, *h)),
            _ => return input_err(format!("{}: malformed annotation row {}", path.display(), i + 1)),
        }
    }
    Ok(boxes)
}

/// Writes frames, annotations and (optionally) the scene description into `dir`.
/// Returns the written paths.
pub fn write_sequence(dir: impl AsRef<Path>, seq: &SyntheticSequence, scene: Option<&SceneConfig>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::with_capacity(seq.len() + 2);
    for (i, frame) in seq.frames.iter().enumerate() {
        let p = dir.join(frame_file_name(i));
        write_pgm(&p, frame)?;
        written.push(p);
    }
    let ann = dir.join(ANNOTATION_FILE);
    write_annotations(&ann, &seq.gt_boxes)?;
    written.push(ann);
    if let Some(scene) = scene {
        let p = dir.join(SCENE_FILE);
        let mut f = fs::File::create(&p)?;
        serde_json::to_writer_pretty(&mut f, scene)?;
        f.write_all(b"\n")?;
        written.push(p);
    }
    Ok(written)
}

pub fn read_sequence(dir: impl AsRef<Path>) -> Result<SyntheticSequence> {
    let dir = dir.as_ref();
    let boxes = read_annotations(dir.join(ANNOTATION_FILE))
        .map_err(|e| Error::Input(format!("unreadable sequence {}: {e}", dir.display())))?;
    let mut frames = Vec::with_capacity(boxes.len());
    for i in 0..boxes.len() {
        let p = dir.join(frame_file_name(i));
        frames.push(read_pgm(&p).map_err(|e| Error::Input(format!("unreadable frame {}: {e}", p.display())))?);
    }
    Ok(SyntheticSequence { frames, gt_boxes: boxes })
}

/// Sequence directories under `root` (those holding an annotation file), sorted by name.
pub fn list_sequence_dirs(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root.as_ref())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(ANNOTATION_FILE).is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}
