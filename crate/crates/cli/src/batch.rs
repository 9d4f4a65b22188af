use std::path::{Path, PathBuf};

use rayon::prelude::*;

use attnclust_core::grabcut::{
    apply_mask, grabcut_segment_with, load_image, parse_strokes, GrabcutParams, Rect, Rgb,
};

use crate::{write_file, Failure};

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ManifestEntry {
    pub image: PathBuf,
    pub bbox: Rect,
    pub strokes: Option<PathBuf>,
}

/// Rows of `image_path,x,y,w,h[,strokes_path]`. A first row whose `x` is
/// not an integer is taken as a header. Relative paths resolve against
/// `base`.
pub(crate) fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("manifest: {e}"))?;
        let line = record.position().map_or(i + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        if !(5..=6).contains(&record.len()) {
            return Err(format!("manifest line {line}: expected 5 or 6 fields, got {}", record.len()));
        }
        let coords: Result<Vec<usize>, _> = (1..5).map(|c| record[c].parse::<usize>()).collect();
        let coords = match coords {
            Ok(c) => c,
            Err(_) if entries.is_empty() && i == 0 => continue,
            Err(e) => return Err(format!("manifest line {line}: bad box: {e}")),
        };
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() { p } else { base.join(p) }
        };
        entries.push(ManifestEntry {
            image: resolve(&record[0]),
            bbox: Rect {
                x: coords[0],
                y: coords[1],
                w: coords[2],
                h: coords[3],
            },
            strokes: record.get(5).filter(|s| !s.is_empty()).map(resolve),
        });
    }
    Ok(entries)
}

fn segment_one(
    entry: &ManifestEntry,
    out_dir: &Path,
    params: &GrabcutParams,
    iterations: usize,
    seed: u64,
    fill: Rgb,
) -> Result<usize, String> {
    let img = load_image(&entry.image).map_err(|e| e.to_string())?;
    let strokes = match &entry.strokes {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            parse_strokes(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => Vec::new(),
    };
    let mask = grabcut_segment_with(&img, entry.bbox, &strokes, iterations, seed, params)
        .map_err(|e| e.to_string())?;
    let stem = entry
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    write_file(&out_dir.join(format!("{stem}.mask.pgm")), mask.to_pgm()).map_err(|f| f.message)?;
    let masked = apply_mask(&img, &mask, fill).map_err(|e| e.to_string())?;
    write_file(&out_dir.join(format!("{stem}.masked.ppm")), masked.to_ppm()).map_err(|f| f.message)?;
    Ok(mask.foreground_count())
}

pub(crate) fn grabcut_batch(
    manifest: &Path,
    out_dir: &Path,
    params: &GrabcutParams,
    iterations: usize,
    seed: u64,
    fill: Rgb,
) -> Result<(), Failure> {
    let text = std::fs::read_to_string(manifest)
        .map_err(|e| Failure::data(format!("{}: {e}", manifest.display())))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let entries = parse_manifest(&text, base).map_err(Failure::config)?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| Failure::data(format!("{}: {e}", out_dir.display())))?;
    let results: Vec<_> = entries
        .par_iter()
        .map(|e| segment_one(e, out_dir, params, iterations, seed, fill))
        .collect();
    let mut failed = 0;
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(fg) => println!("ok {} {fg}", entry.image.display()),
            Err(msg) => {
                failed += 1;
                println!("failed {}: {msg}", entry.image.display());
            }
        }
    }
    if failed > 0 {
        return Err(Failure::data(format!("{failed} of {} images failed", entries.len())));
    }
    Ok(())
}
