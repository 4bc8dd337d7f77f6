use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::corpus::TurnPair;
use crate::error::{CedError, Result};
use crate::model::{AttentionLayer, AttentionRecord, CedModel};

/// Pixels per attention cell in the rendered heatmap.
const CELL: u32 = 4;
/// Gap between head panels.
const GAP: u32 = 2;

/// Sidecar describing a raw `.f64` matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionDescriptor {
    pub session_id: String,
    pub pair_index: usize,
    pub layer: AttentionLayer,
    pub depth: usize,
    /// `[heads, T_query, T_key]`, row-major, little-endian f64.
    pub shape: [usize; 3],
    pub data_file: String,
    pub image_file: String,
}

// anchors of a perceptually ordered dark-blue → green → yellow ramp
const RAMP: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

pub fn colormap(t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * (RAMP.len() - 1) as f64;
    let i = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - i as f64;
    let c = |k: usize| (RAMP[i][k] + f * (RAMP[i + 1][k] - RAMP[i][k])).round() as u8;
    Rgb([c(0), c(1), c(2)])
}

/// Heads side by side; colour scaled by the maximum weight in the record.
pub fn render_heatmap(weights: &Array3<f64>) -> RgbImage {
    let (h, tq, tk) = weights.dim();
    let max = weights.iter().cloned().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let width = h as u32 * (tk as u32 * CELL + GAP) - GAP;
    let mut img = RgbImage::from_pixel(width.max(1), (tq as u32 * CELL).max(1), Rgb([255, 255, 255]));
    for ((head, q, k), &w) in weights.indexed_iter() {
        let colour = colormap(w * scale);
        let x0 = head as u32 * (tk as u32 * CELL + GAP) + k as u32 * CELL;
        let y0 = q as u32 * CELL;
        for dy in 0..CELL {
            for dx in 0..CELL {
                img.put_pixel(x0 + dx, y0 + dy, colour);
            }
        }
    }
    img
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("part");
    std::fs::write(&tmp, bytes)
        .and_then(|_| std::fs::rename(&tmp, path))
        .map_err(|e| CedError::io(format!("writing {}", path.display()), e))
}

/// Writes raw weights, a JSON descriptor and a PNG heatmap for each
/// cross-encoder attention layer; returns the records and written files.
pub fn export_attention(model: &CedModel, pair: &TurnPair, out: &Path) -> Result<(Vec<AttentionRecord>, Vec<PathBuf>)> {
    std::fs::create_dir_all(out).map_err(|e| CedError::io(format!("creating {}", out.display()), e))?;
    let (_, records) = model.embed_pair(pair, true)?;
    let mut files = Vec::new();
    for rec in &records {
        let stem = format!("{}_pair{:04}_{}_{}", pair.session_id, pair.pair_index, rec.layer, rec.depth);
        let data_file = format!("{stem}.f64");
        let image_file = format!("{stem}.png");
        let mut bytes = Vec::with_capacity(rec.weights.len() * 8);
        for v in rec.weights.iter() {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        write_atomic(&out.join(&data_file), &bytes)?;
        let img = render_heatmap(&rec.weights);
        let mut png = Vec::new();
        img.write_to(&mut std::io::Cursor::new(&mut png), image::ImageFormat::Png)
            .map_err(|e| CedError::io("encoding heatmap", std::io::Error::other(e)))?;
        write_atomic(&out.join(&image_file), &png)?;
        let (h, q, k) = rec.weights.dim();
        let desc = AttentionDescriptor {
            session_id: pair.session_id.clone(),
            pair_index: pair.pair_index,
            layer: rec.layer,
            depth: rec.depth,
            shape: [h, q, k],
            data_file: data_file.clone(),
            image_file: image_file.clone(),
        };
        let json_file = format!("{stem}.json");
        write_atomic(&out.join(&json_file), serde_json::to_string_pretty(&desc).expect("serialisable").as_bytes())?;
        files.extend([data_file, image_file, json_file].iter().map(|f| out.join(f)));
    }
    Ok((records, files))
}

/// Share of attention mass falling on the first and last `fraction` of the
/// key frames, averaged over heads and queries.
pub fn column_mass(weights: &Array3<f64>, fraction: f64) -> (f64, f64) {
    let (h, q, tk) = weights.dim();
    let span = ((tk as f64 * fraction).ceil() as usize).clamp(1, tk);
    let per_key = weights.sum_axis(Axis(0)).sum_axis(Axis(0));
    let norm = (h * q) as f64;
    let head = per_key.iter().take(span).sum::<f64>() / norm;
    let tail = per_key.iter().skip(tk - span).sum::<f64>() / norm;
    (head, tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), Rgb([68, 1, 84]));
        assert_eq!(colormap(1.0), Rgb([253, 231, 37]));
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }

    #[test]
    fn heatmap_size() {
        let w = Array3::from_elem((2, 3, 5), 0.2);
        let img = render_heatmap(&w);
        assert_eq!(img.dimensions(), (2 * 5 * CELL + GAP, 3 * CELL));
    }

    #[test]
    fn column_mass_of_uniform_weights() {
        let w = Array3::from_elem((2, 3, 8), 1.0 / 8.0);
        let (a, b) = column_mass(&w, 0.25);
        assert!((a - 0.25).abs() < 1e-12 && (b - 0.25).abs() < 1e-12);
    }
}
