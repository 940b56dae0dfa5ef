//! File formats for images and sinograms.
//!
//! A grid file is a short text header followed by the values as little-endian
//! `f64` in column-major order:
//!
//! ```text
//! SINOTV-GRID 1
//! kind sinogram
//! rows 192
//! cols 192
//! spacing 1
//! angle_start 0
//! angle_step 1
//! end
//! ```
//!
//! `angle_start` and `angle_step` appear for sinograms only.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{io_at, Error, Result};
use crate::grid::{column_major, from_column_major, ImageGrid, Sinogram};

const MAGIC: &str = "SINOTV-GRID 1";

#[derive(Debug, Clone, PartialEq)]
pub enum GridFile {
    Image(ImageGrid),
    Sinogram(Sinogram),
}

fn write_grid<W: Write>(mut w: W, header: &[(&str, String)], data: &Array2<f64>) -> Result<()> {
    let (rows, cols) = data.dim();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "kind {}", header[0].1)?;
    writeln!(w, "rows {rows}")?;
    writeln!(w, "cols {cols}")?;
    for (key, value) in &header[1..] {
        writeln!(w, "{key} {value}")?;
    }
    writeln!(w, "end")?;
    for x in column_major(data).iter() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_image_to<W: Write>(w: W, u: &ImageGrid) -> Result<()> {
    write_grid(w, &[("kind", "image".into()), ("spacing", u.pixel_size.to_string())], &u.data)
}

pub fn write_sinogram_to<W: Write>(w: W, g: &Sinogram) -> Result<()> {
    write_grid(
        w,
        &[
            ("kind", "sinogram".into()),
            ("spacing", g.bin_spacing.to_string()),
            ("angle_start", g.angle_start.to_string()),
            ("angle_step", g.angle_step.to_string()),
        ],
        &g.data,
    )
}

pub fn write_image(path: &Path, u: &ImageGrid) -> Result<()> {
    write_image_to(BufWriter::new(File::create(path).map_err(io_at(path))?), u)
}

pub fn write_sinogram(path: &Path, g: &Sinogram) -> Result<()> {
    write_sinogram_to(BufWriter::new(File::create(path).map_err(io_at(path))?), g)
}

pub fn read_grid_from<R: BufRead>(mut r: R) -> Result<GridFile> {
    let bad = |msg: String| Error::Format(msg);
    let mut line = String::new();
    let mut next_line = |r: &mut R| -> Result<String> {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            return Err(bad("unexpected end of header".into()));
        }
        Ok(line.trim_end().to_string())
    };
    if next_line(&mut r)? != MAGIC {
        return Err(bad("not a grid file".into()));
    }
    let mut fields = std::collections::BTreeMap::new();
    loop {
        let l = next_line(&mut r)?;
        if l == "end" {
            break;
        }
        let (key, value) = l
            .split_once(' ')
            .ok_or_else(|| bad(format!("malformed header line {l:?}")))?;
        fields.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| {
        fields
            .get(key)
            .ok_or_else(|| bad(format!("missing header field {key}")))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?
            .parse::<f64>()
            .map_err(|e| bad(format!("{key}: {e}")))
    };
    let dim = |key: &str| -> Result<usize> {
        get(key)?
            .parse::<usize>()
            .map_err(|e| bad(format!("{key}: {e}")))
    };
    let (rows, cols) = (dim("rows")?, dim("cols")?);
    let len = rows
        .checked_mul(cols)
        .filter(|&n| n > 0)
        .ok_or_else(|| bad(format!("invalid dimensions {rows}x{cols}")))?;
    let mut bytes = vec![0u8; len * 8];
    r.read_exact(&mut bytes)
        .map_err(|_| bad(format!("payload shorter than {len} values")))?;
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(bad("trailing bytes after payload".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let data = from_column_major((rows, cols), values);
    match get("kind")?.as_str() {
        "image" => Ok(GridFile::Image(ImageGrid {
            data,
            pixel_size: num("spacing")?,
        })),
        "sinogram" => Ok(GridFile::Sinogram(Sinogram {
            data,
            bin_spacing: num("spacing")?,
            angle_start: num("angle_start")?,
            angle_step: num("angle_step")?,
        })),
        other => Err(bad(format!("unknown kind {other:?}"))),
    }
}

pub fn read_grid(path: &Path) -> Result<GridFile> {
    read_grid_from(BufReader::new(File::open(path).map_err(io_at(path))?)).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        Error::Io(e) => io_at(path)(e),
        other => other,
    })
}

pub fn read_image(path: &Path) -> Result<ImageGrid> {
    match read_grid(path)? {
        GridFile::Image(u) => Ok(u),
        GridFile::Sinogram(_) => Err(Error::Format(format!("{} holds a sinogram", path.display()))),
    }
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram> {
    match read_grid(path)? {
        GridFile::Sinogram(g) => Ok(g),
        GridFile::Image(_) => Err(Error::Format(format!("{} holds an image", path.display()))),
    }
}

/// 16-bit binary PGM, min-max scaled. Row 0 is the top line.
pub fn write_pgm(path: &Path, data: &Array2<f64>) -> Result<()> {
    let (rows, cols) = data.dim();
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = BufWriter::new(File::create(path).map_err(io_at(path))?);
    write!(w, "P5\n{cols} {rows}\n65535\n")?;
    for row in data.rows() {
        for &x in row {
            let level = ((x - lo) / span * 65535.0).round() as u16;
            w.write_all(&level.to_be_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One `index,value` line per entry under the given header.
pub fn write_profile_csv(path: &Path, header: &str, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_at(path))?);
    writeln!(w, "{header}")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(w, "{i},{v:e}")?;
    }
    w.flush()?;
    Ok(())
}
