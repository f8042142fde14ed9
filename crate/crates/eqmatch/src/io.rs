//! File formats: binary configurations with a JSON sidecar, CSV dumps for
//! seeds and edge cut levels, and a static SVG log-log plot.
//!
//! Configuration binary layout (little endian):
//! magic `EQMZ`, version u32, dimension u32, geometry tag u8 (0 window /
//! 1 torus), corner i64s (window only), sides u64s, rng_seed u64, bias f64,
//! bit count u64, then the packed bits row-major, least significant bit
//! first within each byte.

use std::io::{Read, Write};

use crate::clumping::{EdgeCutLevels, SeedRecord, TruncationReport};
use crate::error::{Error, Result};
use crate::lattice::{Configuration, Geometry, PackedBits};
use crate::stats::SurvivalCurve;

const MAGIC: &[u8; 4] = b"EQMZ";
const VERSION: u32 = 1;

pub fn write_configuration<W: Write>(c: &Configuration, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(c.dimension() as u32).to_le_bytes())?;
    match c.geometry() {
        Geometry::Window { corner, sides } => {
            w.write_all(&[0u8])?;
            for v in corner {
                w.write_all(&v.to_le_bytes())?;
            }
            for v in sides {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Geometry::Torus { sides } => {
            w.write_all(&[1u8])?;
            for v in sides {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.write_all(&c.rng_seed().to_le_bytes())?;
    w.write_all(&c.bias().to_le_bytes())?;
    let n = c.site_count();
    w.write_all(&n.to_le_bytes())?;
    let mut byte = 0u8;
    let mut filled = 0u32;
    for i in 0..n {
        if c.bit(i) {
            byte |= 1 << filled;
        }
        filled += 1;
        if filled == 8 {
            w.write_all(&[byte])?;
            byte = 0;
            filled = 0;
        }
    }
    if filled > 0 {
        w.write_all(&[byte])?;
    }
    Ok(())
}

pub fn read_configuration<R: Read>(mut r: R) -> Result<Configuration> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad magic; not a configuration file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = read_u32(&mut r)? as usize;
    if d == 0 || d > 16 {
        return Err(Error::Format(format!("implausible dimension {d}")));
    }
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let geometry = match tag[0] {
        0 => {
            let mut corner = Vec::with_capacity(d);
            for _ in 0..d {
                corner.push(read_i64(&mut r)?);
            }
            let mut sides = Vec::with_capacity(d);
            for _ in 0..d {
                sides.push(read_u64(&mut r)?);
            }
            Geometry::window(corner, sides)?
        }
        1 => {
            let mut sides = Vec::with_capacity(d);
            for _ in 0..d {
                sides.push(read_u64(&mut r)?);
            }
            Geometry::torus(sides)?
        }
        other => return Err(Error::Format(format!("unknown geometry tag {other}"))),
    };
    let rng_seed = read_u64(&mut r)?;
    let bias = f64::from_le_bytes(read_array(&mut r)?);
    let n = read_u64(&mut r)?;
    if n != geometry.site_count() {
        return Err(Error::Format(format!(
            "bit count {n} does not match geometry ({})",
            geometry.site_count()
        )));
    }
    let mut bits = PackedBits::zeros(n);
    let mut buf = vec![0u8; n.div_ceil(8) as usize];
    r.read_exact(&mut buf)?;
    for i in 0..n {
        if (buf[(i / 8) as usize] >> (i % 8)) & 1 == 1 {
            bits.set(i, true);
        }
    }
    Ok(Configuration::from_bits(geometry, bits, rng_seed, bias))
}

fn read_array<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_i64<R: Read>(r: &mut R) -> Result<i64> {
    Ok(i64::from_le_bytes(read_array(r)?))
}

/// JSON sidecar mirroring the binary header.
pub fn configuration_sidecar(c: &Configuration) -> serde_json::Value {
    serde_json::json!({
        "magic": "EQMZ",
        "version": VERSION,
        "dimension": c.dimension(),
        "geometry": c.geometry(),
        "rng_seed": c.rng_seed(),
        "bias": c.bias(),
        "sites": c.site_count(),
    })
}

pub fn write_seeds_csv<W: Write>(seeds: &[SeedRecord], d: usize, mut w: W) -> Result<()> {
    let mut header = vec!["level".to_string()];
    for axis in 1..=d {
        header.push(format!("x{axis}"));
    }
    writeln!(w, "{}", header.join(","))?;
    for s in seeds {
        let mut row = vec![s.level.to_string()];
        row.extend(s.position.iter().map(|c| c.to_string()));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn write_cutlevels_csv<W: Write>(cuts: &EdgeCutLevels, mut w: W) -> Result<()> {
    let geometry = cuts.geometry();
    let d = geometry.dimension();
    let mut header = Vec::new();
    for axis in 1..=d {
        header.push(format!("x{axis}"));
    }
    header.push("axis".into());
    header.push("level".into());
    writeln!(w, "{}", header.join(","))?;
    for site in 0..geometry.site_count() {
        let coords = geometry.coords_of(site);
        for axis in 0..d {
            if !cuts.edge_exists(site, axis) {
                continue;
            }
            let level = cuts.level(site, axis);
            if level == 0 {
                continue;
            }
            let mut row: Vec<String> = coords.iter().map(|c| c.to_string()).collect();
            row.push((axis + 1).to_string());
            row.push(level.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
    }
    Ok(())
}

pub fn truncation_json(report: &TruncationReport) -> serde_json::Value {
    serde_json::json!({
        "k_max": report.k_max,
        "margin": report.halo_margin,
        "residual_bound": report.residual_bound,
        "forced_merges": report.forced_merges,
    })
}

/// Static log-log SVG of a survival curve with reference lines.
pub fn write_tail_svg<W: Write>(
    curve: &SurvivalCurve,
    references: &[(String, Vec<(f64, f64)>)],
    mut w: W,
) -> Result<()> {
    const WIDTH: f64 = 720.0;
    const HEIGHT: f64 = 480.0;
    const PAD: f64 = 56.0;

    let mut pts: Vec<(f64, f64)> = Vec::new();
    for i in 0..curve.radii.len() {
        if curve.p_hat[i].is_finite() && curve.p_hat[i] > 0.0 {
            pts.push((curve.radii[i] as f64, curve.p_hat[i]));
        }
    }
    if pts.is_empty() {
        return Err(Error::DegenerateSample("empty survival curve".into()));
    }
    let all: Vec<(f64, f64)> = pts
        .iter()
        .copied()
        .chain(references.iter().flat_map(|(_, v)| v.iter().copied()))
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .collect();
    let (mut x_lo, mut x_hi) = (f64::MAX, f64::MIN);
    let (mut y_lo, mut y_hi) = (f64::MAX, f64::MIN);
    for (x, y) in &all {
        x_lo = x_lo.min(x.ln());
        x_hi = x_hi.max(x.ln());
        y_lo = y_lo.min(y.ln());
        y_hi = y_hi.max(y.ln());
    }
    if x_hi <= x_lo {
        x_hi = x_lo + 1.0;
    }
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let sx = |x: f64| PAD + (x.ln() - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * PAD);
    let sy = |y: f64| HEIGHT - PAD - (y.ln() - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * PAD);
    let path = |v: &[(f64, f64)]| {
        v.iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    writeln!(
        w,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )?;
    writeln!(w, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>")?;
    writeln!(
        w,
        "<rect x=\"{PAD}\" y=\"{PAD}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        WIDTH - 2.0 * PAD,
        HEIGHT - 2.0 * PAD
    )?;
    writeln!(
        w,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\">r (log scale)</text>",
        WIDTH / 2.0,
        HEIGHT - 16.0
    )?;
    writeln!(
        w,
        "<text x=\"18\" y=\"{:.1}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.1})\">P(Z &gt; r) (log scale)</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    )?;
    let colors = ["#c44", "#47c", "#2a2", "#a5a"];
    for (i, (label, series)) in references.iter().enumerate() {
        let series: Vec<(f64, f64)> = series
            .iter()
            .copied()
            .filter(|(x, y)| *x > 0.0 && *y > 0.0)
            .collect();
        if series.is_empty() {
            continue;
        }
        let color = colors[(i + 1) % colors.len()];
        writeln!(
            w,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-dasharray=\"5,3\"/>",
            path(&series)
        )?;
        writeln!(
            w,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{label}</text>",
            WIDTH - PAD - 190.0,
            PAD + 18.0 + 16.0 * i as f64
        )?;
    }
    writeln!(
        w,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.8\"/>",
        path(&pts),
        colors[0]
    )?;
    for (x, y) in &pts {
        writeln!(
            w,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.4\" fill=\"{}\"/>",
            sx(*x),
            sy(*y),
            colors[0]
        )?;
    }
    writeln!(
        w,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{}\">empirical survival</text>",
        WIDTH - PAD - 190.0,
        PAD + 18.0 + 16.0 * references.len() as f64,
        colors[0]
    )?;
    writeln!(w, "</svg>")?;
    Ok(())
}
