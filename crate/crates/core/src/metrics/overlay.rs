use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::RegionSet;

/// A grounded word: the region picked for it and that region's weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayWord {
    pub word: String,
    pub frame: usize,
    pub region: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OverlayEntry {
    pub word: String,
    pub frame: usize,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub weight: f64,
    pub image: String,
}

const PALETTE: [[u8; 3]; 6] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [255, 225, 25],
];

fn draw_rect(img: &mut RgbImage, x1: f64, y1: f64, x2: f64, y2: f64, color: Rgb<u8>, thickness: u32) {
    let (w, h) = img.dimensions();
    let clamp = |v: f64, hi: u32| (v.max(0.0) as u32).min(hi.saturating_sub(1));
    let (x1, x2) = (clamp(x1, w), clamp(x2, w));
    let (y1, y2) = (clamp(y1, h), clamp(y2, h));
    for t in 0..thickness {
        for x in x1..=x2 {
            for y in [y1.saturating_add(t).min(y2), y2.saturating_sub(t).max(y1)] {
                img.put_pixel(x, y, color);
            }
        }
        for y in y1..=y2 {
            for x in [x1.saturating_add(t).min(x2), x2.saturating_sub(t).max(x1)] {
                img.put_pixel(x, y, color);
            }
        }
    }
}

/// Draws each word's region on a blank canvas of the frame size, one PNG
/// per frame, and writes `<stem>.json` listing (word, box, weight).
pub fn render_overlay(regions: &RegionSet, words: &[OverlayWord], dir: &Path, stem: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (fw, fh) = regions.frame_size();
    let scale = (1024.0 / fw.max(fh)).min(1.0);
    let (cw, ch) = (((fw * scale).ceil() as u32).max(1), ((fh * scale).ceil() as u32).max(1));
    let mut frames: Vec<usize> = words.iter().map(|w| w.frame).collect();
    frames.sort_unstable();
    frames.dedup();
    let mut entries = Vec::new();
    for f in frames {
        let mut img = RgbImage::from_pixel(cw, ch, Rgb([24, 24, 24]));
        let name = format!("{stem}_f{f}.png");
        for (i, w) in words.iter().enumerate().filter(|(_, w)| w.frame == f) {
            if w.region >= regions.len() {
                return Err(Error::Data(format!("overlay region {} out of {}", w.region, regions.len())));
            }
            let b = regions.region(w.region).bbox;
            let color = Rgb(PALETTE[i % PALETTE.len()]);
            draw_rect(&mut img, b.x1() * scale, b.y1() * scale, b.x2() * scale, b.y2() * scale, color, 2);
            entries.push(OverlayEntry {
                word: w.word.clone(),
                frame: f,
                bbox: b.to_array(),
                weight: w.weight,
                image: name.clone(),
            });
        }
        let path = dir.join(&name);
        img.save(&path)?;
    }
    let sidecar = dir.join(format!("{stem}.json"));
    let json = serde_json::to_string_pretty(&entries)?;
    std::fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))?;
    Ok(sidecar)
}
