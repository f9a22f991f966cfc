use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::{Error, Result};

/// Uniformly sampled input/output experiment log.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    pub t: Vec<f64>,
    /// PWM frequency, Hz.
    pub u: Vec<f64>,
    /// Angular velocity (deg/s) or position (deg).
    pub y: Vec<f64>,
    pub label: String,
}

pub const MIN_SAMPLES: usize = 10;
const UNIFORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    /// Header `t,u,y`, one sample per line.
    #[default]
    Csv,
}

impl DataSet {
    pub fn new(t: Vec<f64>, u: Vec<f64>, y: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        let ds = DataSet {
            t,
            u,
            y,
            label: label.into(),
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        let n = self.t.len();
        if self.u.len() != n || self.y.len() != n {
            return Err(Error::Dimension(format!(
                "t, u, y lengths differ: {}, {}, {}",
                n,
                self.u.len(),
                self.y.len()
            )));
        }
        if n < MIN_SAMPLES {
            return Err(Error::invalid(format!("need at least {MIN_SAMPLES} samples, got {n}")));
        }
        if self.t.iter().chain(&self.u).chain(&self.y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset samples".into()));
        }
        let ts = median_step(&self.t);
        if !(ts > 0.0) {
            return Err(Error::invalid("time stamps must increase"));
        }
        if let Some(k) = first_irregular_step(&self.t) {
            return Err(Error::invalid(format!(
                "non-uniform sampling between samples {} and {}",
                k,
                k + 1
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Median sampling period.
    pub fn ts(&self) -> f64 {
        median_step(&self.t)
    }

    pub fn load(path: &Path, format: DatasetFormat) -> Result<Self> {
        let file = File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match format {
            DatasetFormat::Csv => DataSet::from_csv(file, &path.display().to_string(), &label),
        }
    }

    /// Parses `t,u,y` CSV; errors carry the source name and line number.
    pub fn from_csv<R: Read>(rdr: R, source: &str, label: &str) -> Result<Self> {
        let err = |line: u64, message: String| Error::Dataset {
            path: source.to_string(),
            line,
            message,
        };
        let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(rdr);
        let headers = rd.headers().map_err(|e| err(1, e.to_string()))?.clone();
        if headers.is_empty() || (headers.len() == 1 && headers.get(0) == Some("")) {
            return Err(err(1, "file is empty".into()));
        }
        if headers.iter().collect::<Vec<_>>() != ["t", "u", "y"] {
            return Err(err(1, format!("expected header t,u,y, found {}", headers.iter().collect::<Vec<_>>().join(","))));
        }
        let (mut t, mut u, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rd.records() {
            let rec = rec.map_err(|e| err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let mut vals = [0.0; 3];
            for (i, v) in vals.iter_mut().enumerate() {
                let field = rec.get(i).unwrap_or("");
                *v = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(line, format!("column {} is not a finite number: {field:?}", ["t", "u", "y"][i])))?;
            }
            t.push(vals[0]);
            u.push(vals[1]);
            y.push(vals[2]);
        }
        if t.is_empty() {
            return Err(err(2, "no samples".into()));
        }
        let ds = DataSet {
            t,
            u,
            y,
            label: label.to_string(),
        };
        ds.validate().map_err(|e| {
            // Sample k sits on line k + 2; point at the late sample.
            let line = first_irregular_step(&ds.t).map_or(0, |k| k as u64 + 3);
            err(line, e.to_string())
        })?;
        Ok(ds)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("t,u,y\n");
        for k in 0..self.len() {
            out.push_str(&format!("{},{},{}\n", self.t[k], self.u[k], self.y[k]));
        }
        out
    }
}

fn first_irregular_step(t: &[f64]) -> Option<usize> {
    let ts = median_step(t);
    t.windows(2).position(|w| ((w[1] - w[0]) - ts).abs() >= UNIFORM_TOL)
}

fn median_step(t: &[f64]) -> f64 {
    let mut d: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    d[d.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn csv(n: usize) -> String {
        let mut s = String::from("t,u,y\n");
        for k in 0..n {
            s.push_str(&format!("{},{},{}\n", k as f64 * 0.01, 250000.0, k as f64));
        }
        s
    }

    #[test]
    fn parses_valid_csv() {
        let ds = DataSet::from_csv(csv(20).as_bytes(), "mem", "x").unwrap();
        assert_eq!(ds.len(), 20);
        assert!((ds.ts() - 0.01).abs() < 1e-12);
        let back = DataSet::from_csv(ds.to_csv_string().as_bytes(), "mem", "x").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn reports_line_numbers() {
        let mut s = csv(20);
        s = s.replacen("0.05,250000,5", "0.05,abc,5", 1);
        match DataSet::from_csv(s.as_bytes(), "f.csv", "x") {
            Err(Error::Dataset { path, line, .. }) => {
                assert_eq!(path, "f.csv");
                assert_eq!(line, 7);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(
            DataSet::from_csv("".as_bytes(), "empty.csv", ""),
            Err(Error::Dataset { line: 1, .. })
        ));
        assert!(DataSet::from_csv("a,b,c\n1,2,3\n".as_bytes(), "m", "").is_err());
        assert!(DataSet::from_csv(csv(5).as_bytes(), "m", "").is_err());
        let jitter = csv(20).replacen("0.05,", "0.0502,", 1);
        match DataSet::from_csv(jitter.as_bytes(), "m", "") {
            Err(Error::Dataset { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constructor_invariants() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        assert!(DataSet::new(t.clone(), vec![0.0; 10], vec![0.0; 9], "").is_err());
        assert!(DataSet::new(t.clone(), vec![0.0; 10], vec![f64::NAN; 10], "").is_err());
        let back: Vec<f64> = t.iter().rev().copied().collect();
        assert!(DataSet::new(back, vec![0.0; 10], vec![0.0; 10], "").is_err());
    }
}
