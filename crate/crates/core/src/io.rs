//! PNG input and output.

use std::path::{Path, PathBuf};

use crate::metrics::ImageU8;
use crate::{Error, Result};

pub fn read_png(path: impl AsRef<Path>) -> Result<ImageU8> {
    let img = image::open(path.as_ref())?.into_rgb8();
    let (w, h) = img.dimensions();
    ImageU8::new(w as usize, h as usize, img.into_raw())
}

pub fn write_png(img: &ImageU8, path: impl AsRef<Path>) -> Result<()> {
    image::save_buffer_with_format(
        path.as_ref(),
        img.pixels(),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::Rgb8,
        image::ImageFormat::Png,
    )?;
    Ok(())
}

/// `*.png` files of `dir`, sorted by file name.
pub fn list_pngs(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Data(format!("{} is not a directory", dir.display())));
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("no PNG images in {}", dir.display())));
    }
    Ok(paths)
}

/// Every PNG of a directory of HR images, named by file stem.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<(String, ImageU8)>> {
    list_pngs(dir)?
        .into_iter()
        .map(|p| {
            let name = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok((name, read_png(&p)?))
        })
        .collect()
}
