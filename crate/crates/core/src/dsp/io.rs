//! CSV schemas for spectra and phase-space tracks.
//!
//! Metadata precedes the header as `# key=value` comment lines.

use std::io::{BufRead, Write};

use super::{PhaseSpaceTrack, Spectrum, SpectrumSource};
use crate::error::DspError;

const SPECTRUM_HEADER: &str = "freq_hz,psd_m2_per_hz";
const TRACK_HEADER: &str = "t_s,x_shot_units,y_shot_units";

fn io_err(e: std::io::Error) -> DspError {
    DspError::Csv(e.to_string())
}

pub fn write_spectrum_csv<W: Write>(spectrum: &Spectrum, mut w: W) -> Result<(), DspError> {
    writeln!(w, "# source={}", spectrum.source.as_str()).map_err(io_err)?;
    writeln!(w, "# resolution_bw_hz={:e}", spectrum.resolution_bw).map_err(io_err)?;
    writeln!(w, "# bin_width_hz={:e}", spectrum.bin_width).map_err(io_err)?;
    writeln!(w, "# averages={}", spectrum.averages).map_err(io_err)?;
    writeln!(w, "{SPECTRUM_HEADER}").map_err(io_err)?;
    for (f, p) in spectrum.freq.iter().zip(&spectrum.psd) {
        writeln!(w, "{f:e},{p:e}").map_err(io_err)?;
    }
    Ok(())
}

/// Reads the spectrum schema. Missing metadata defaults to: source `in_loop_y`,
/// one average, bin width and resolution bandwidth from the frequency grid.
pub fn read_spectrum_csv<R: BufRead>(r: R) -> Result<Spectrum, DspError> {
    let mut source = SpectrumSource::InLoopY;
    let mut resolution_bw = None;
    let mut bin_width = None;
    let mut averages = 1usize;
    let mut freq = Vec::new();
    let mut psd = Vec::new();
    let mut seen_header = false;
    for (lineno, line) in r.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| DspError::Csv(format!("line {}: {what}", lineno + 1));
        if let Some(meta) = line.strip_prefix('#') {
            let Some((k, v)) = meta.trim().split_once('=') else { continue };
            let v = v.trim();
            match k.trim() {
                "source" => source = SpectrumSource::parse(v).ok_or_else(|| bad("unknown source"))?,
                "resolution_bw_hz" => resolution_bw = Some(v.parse().map_err(|_| bad("bad resolution_bw_hz"))?),
                "bin_width_hz" => bin_width = Some(v.parse().map_err(|_| bad("bad bin_width_hz"))?),
                "averages" => averages = v.parse().map_err(|_| bad("bad averages"))?,
                _ => {}
            }
            continue;
        }
        if !seen_header {
            if line.replace(' ', "") != SPECTRUM_HEADER {
                return Err(bad(&format!("expected header `{SPECTRUM_HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        let mut cols = line.split(',');
        let (Some(f), Some(p), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(bad("expected two columns"));
        };
        freq.push(f.trim().parse::<f64>().map_err(|_| bad("bad frequency"))?);
        psd.push(p.trim().parse::<f64>().map_err(|_| bad("bad psd"))?);
    }
    if freq.len() < 2 {
        return Err(DspError::Csv("need at least two spectrum rows".into()));
    }
    if freq.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DspError::Csv("frequencies must be strictly increasing".into()));
    }
    let grid = (freq[freq.len() - 1] - freq[0]) / (freq.len() - 1) as f64;
    let bin_width = bin_width.unwrap_or(grid);
    Ok(Spectrum {
        freq,
        psd,
        resolution_bw: resolution_bw.unwrap_or(bin_width),
        bin_width,
        averages,
        source,
    })
}

pub fn write_track_csv<W: Write>(track: &PhaseSpaceTrack, mut w: W) -> Result<(), DspError> {
    writeln!(w, "# reference_hz={:e}", track.reference_hz).map_err(io_err)?;
    writeln!(w, "# lpf_bandwidth_hz={:e}", track.lpf_bandwidth).map_err(io_err)?;
    writeln!(w, "# sample_rate_hz={:e}", track.sample_rate).map_err(io_err)?;
    writeln!(w, "{TRACK_HEADER}").map_err(io_err)?;
    for ((t, x), y) in track.t.iter().zip(&track.in_phase).zip(&track.quadrature) {
        writeln!(w, "{t:e},{x:e},{y:e}").map_err(io_err)?;
    }
    Ok(())
}
