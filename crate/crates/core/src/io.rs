//! CSV and JSON forms of paths and observation sets.
//!
//! CSV files carry the header `t,x`; floats are written with 17 significant
//! digits so every value survives a write/read cycle bit-exactly. Lines
//! starting with `#` are metadata and ignored on input.

use std::fs;
use std::io::{Read, Write};
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ObservationSet, Path, TimeGrid};

/// 17 significant digits, scientific notation.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Relative tolerance for recognising a uniform mesh in a CSV file.
const GRID_RTOL: f64 = 1e-9;

pub fn write_samples_csv<W: Write>(
    out: W,
    times: impl Iterator<Item = f64>,
    values: &[f64],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "x"])?;
    for (t, x) in times.zip(values) {
        w.write_record([fmt_f64(t), fmt_f64(*x)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn path_to_csv<W: Write>(path: &Path, out: W) -> Result<()> {
    write_samples_csv(out, path.grid().times(), path.values())
}

pub fn observations_to_csv<W: Write>(obs: &ObservationSet, out: W) -> Result<()> {
    write_samples_csv(out, obs.times().iter().copied(), obs.values())
}

fn read_samples_csv<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "x" {
        return Err(Error::Parse(format!(
            "expected header `t,x`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str, col: &str| {
            s.parse::<f64>()
                .map_err(|e| Error::Parse(format!("record {}: column {col}: {e}", line + 1)))
        };
        times.push(parse(&rec[0], "t")?);
        values.push(parse(&rec[1], "x")?);
    }
    Ok((times, values))
}

pub fn observations_from_csv<R: Read>(input: R) -> Result<ObservationSet> {
    let (t, x) = read_samples_csv(input)?;
    ObservationSet::new(t, x)
}

/// Reads a `t,x` file whose times must form a uniform mesh.
pub fn path_from_csv<R: Read>(input: R) -> Result<Path> {
    let (times, values) = read_samples_csv(input)?;
    if times.len() < 2 {
        return Err(Error::Parse("a path needs at least two records".into()));
    }
    let n = times.len() - 1;
    let grid = TimeGrid::new(times[0], times[n], n)?;
    for (i, t) in times.iter().enumerate() {
        if (t - grid.time(i)).abs() > GRID_RTOL * grid.delta().max(t.abs()) {
            return Err(Error::Parse(format!(
                "record {}: time {t} is off the uniform mesh (expected {})",
                i + 1,
                grid.time(i)
            )));
        }
    }
    Path::new(grid, values)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObservationsJson {
    times: Vec<f64>,
    values: Vec<f64>,
}

pub fn path_to_json(path: &Path) -> Result<String> {
    Ok(serde_json::to_string(path)?)
}

pub fn path_from_json(s: &str) -> Result<Path> {
    Ok(serde_json::from_str(s)?)
}

pub fn observations_to_json(obs: &ObservationSet) -> Result<String> {
    Ok(serde_json::to_string(&ObservationsJson {
        times: obs.times().to_vec(),
        values: obs.values().to_vec(),
    })?)
}

pub fn observations_from_json(s: &str) -> Result<ObservationSet> {
    let j: ObservationsJson = serde_json::from_str(s)?;
    ObservationSet::new(j.times, j.values)
}

/// On-disk sample formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn from_extension(p: &FsPath) -> Option<Format> {
        match p.extension()?.to_str()? {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

/// Loads a path, choosing the format from the file extension (CSV by default).
pub fn load_path(file: &FsPath) -> Result<Path> {
    match Format::from_extension(file) {
        Some(Format::Json) => path_from_json(&fs::read_to_string(file)?),
        _ => path_from_csv(fs::File::open(file)?),
    }
}

/// Loads observations; JSON files may hold either form.
pub fn load_observations(file: &FsPath) -> Result<ObservationSet> {
    match Format::from_extension(file) {
        Some(Format::Json) => {
            let s = fs::read_to_string(file)?;
            observations_from_json(&s)
                .or_else(|_| path_from_json(&s).map(|p| ObservationSet::from(p.to_trajectory())))
        }
        _ => observations_from_csv(fs::File::open(file)?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csv_has_header_and_17_digits() {
        let g = TimeGrid::new(0.0, 1.0, 2).unwrap();
        let p = Path::new(g, vec![0.1, 0.2, 0.30000000000000004]).unwrap();
        let mut buf = Vec::new();
        path_to_csv(&p, &mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("t,x"));
        assert_eq!(
            lines.next(),
            Some("0.0000000000000000e0,1.0000000000000001e-1")
        );
        assert_eq!(path_from_csv(s.as_bytes()).unwrap(), p);
    }

    #[test]
    fn csv_rejects_bad_header_and_offgrid_times() {
        assert!(path_from_csv("time,x\n0,1\n1,1\n".as_bytes()).is_err());
        assert!(path_from_csv("t,x\n0,1\n0.3,1\n1,1\n".as_bytes()).is_err());
        let obs = observations_from_csv("# meta\nt,x\n0,1\n0.3,1\n1,1\n".as_bytes()).unwrap();
        assert_eq!(obs.k(), 2);
    }

    #[test]
    fn json_shape() {
        let g = TimeGrid::new(0.0, 1.0, 1).unwrap();
        let p = Path::new(g, vec![0.5, 0.6]).unwrap();
        let s = path_to_json(&p).unwrap();
        assert_eq!(
            s,
            r#"{"grid":{"t0":0.0,"T":1.0,"n":1,"delta":1.0},"values":[0.5,0.6]}"#
        );
        assert_eq!(path_from_json(&s).unwrap(), p);
        assert!(path_from_json(r#"{"grid":{"t0":0,"T":1,"n":1},"values":[0.5,-0.6]}"#).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_exact(values in prop::collection::vec(1e-300f64..1e3, 2..50), t_end in 0.001f64..1e4) {
            let g = TimeGrid::new(0.0, t_end, values.len() - 1).unwrap();
            let p = Path::new(g, values).unwrap();
            let mut buf = Vec::new();
            path_to_csv(&p, &mut buf).unwrap();
            let back = path_from_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.values(), p.values());
            let obs = crate::simulate::subsample(&p, &crate::simulate::Selection::Fraction(1.0)).unwrap();
            let mut buf = Vec::new();
            observations_to_csv(&obs, &mut buf).unwrap();
            let back = observations_from_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(back.times(), obs.times());
            prop_assert_eq!(back.values(), obs.values());
        }
    }
}
