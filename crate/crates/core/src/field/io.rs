//! CSV layout for sampled fields, plus a JSON descriptor.
//!
//! ```text
//! t,x,v            scalar on a space-time grid
//! x,v0,v1          vector on an interval
//! t,x,v0_0         1×1 matrix
//! ```
//!
//! Rows are cell centres in row-major order (first axis slowest).

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ops::unravel;
use super::{Axis, Domain, DomainKind, Field, FieldError, Shape};
use crate::scalar::Scalar;

/// JSON companion of a sampled-field CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", deny_unknown_fields)]
pub struct FieldDescriptor<T> {
    pub domain: Domain<T>,
    pub shape: Shape,
    pub resolution: Vec<usize>,
    /// CSV file name, relative to the descriptor.
    pub csv: String,
}

fn parse_shape(cols: &[String]) -> Result<Shape, FieldError> {
    if cols == ["v"] {
        return Ok(Shape::Scalar);
    }
    let vector: Vec<String> = (0..cols.len()).map(|i| format!("v{i}")).collect();
    if cols == vector.as_slice() {
        return Ok(Shape::Vector(cols.len()));
    }
    let last = cols
        .last()
        .and_then(|c| c.strip_prefix('v'))
        .and_then(|c| c.split_once('_'))
        .and_then(|(r, c)| Some((r.parse::<usize>().ok()? + 1, c.parse::<usize>().ok()? + 1)));
    if let Some((rows, cols_n)) = last {
        let shape = Shape::Matrix { rows, cols: cols_n };
        if shape.column_names() == cols {
            return Ok(shape);
        }
    }
    Err(FieldError::Format(format!("unrecognised value columns {cols:?}")))
}

impl<T: Scalar> Field<T> {
    /// Writes a sampled field as CSV.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FieldError> {
        let grid = self
            .grid()
            .ok_or_else(|| FieldError::Format("only sampled fields can be written; sample first".into()))?;
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = self.domain().axis_names().iter().map(|s| s.to_string()).collect();
        header.extend(self.shape().column_names());
        out.write_record(&header)?;
        let centers = Field::cell_centers(self.domain(), &grid.resolution);
        let k = self.shape().len();
        let mut p = vec![T::zero(); self.domain().dim()];
        for (cell, vals) in grid.values.chunks(k).enumerate() {
            unravel(cell, &grid.resolution, &centers, &mut p);
            let row: Vec<String> = p.iter().chain(vals).map(|v| v.to_string()).collect();
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a sampled field from CSV, inferring the grid from the cell centres.
    pub fn read_csv<R: Read>(r: R) -> Result<Field<T>, FieldError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let n_axes = header.iter().take_while(|h| !h.starts_with('v')).count();
        let names: Vec<&str> = header[..n_axes].iter().map(String::as_str).collect();
        let kind = match names.as_slice() {
            ["x"] => DomainKind::Interval1D,
            ["t", "x"] | ["t", "x", "y"] => DomainKind::SpaceTimeBox,
            other => {
                return Err(FieldError::Format(format!("unrecognised axis columns {other:?}")))
            }
        };
        let shape = parse_shape(&header[n_axes..])?;
        let mut coords: Vec<Vec<T>> = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != header.len() {
                return Err(FieldError::Format(format!("row {}: expected {} columns", line + 2, header.len())));
            }
            let mut row = Vec::with_capacity(rec.len());
            for (col, s) in rec.iter().enumerate() {
                let v: f64 = s.trim().parse().map_err(|_| {
                    FieldError::Format(format!("row {}, column `{}`: `{s}` is not a number", line + 2, header[col]))
                })?;
                row.push(T::c(v));
            }
            values.extend_from_slice(&row[n_axes..]);
            coords.push(row[..n_axes].to_vec());
        }
        let mut axis_centers: Vec<Vec<T>> = vec![Vec::new(); n_axes];
        for (axis, list) in axis_centers.iter_mut().enumerate() {
            for c in &coords {
                if !list.contains(&c[axis]) {
                    list.push(c[axis]);
                }
            }
        }
        let resolution: Vec<usize> = axis_centers.iter().map(Vec::len).collect();
        if resolution.iter().product::<usize>() != coords.len() {
            return Err(FieldError::Format("rows do not form a full tensor grid".into()));
        }
        let mut axes = Vec::with_capacity(n_axes);
        for (axis, list) in axis_centers.iter().enumerate() {
            if list.len() < 2 {
                return Err(FieldError::Format(format!(
                    "axis `{}` has a single cell; bounds need a JSON descriptor",
                    names[axis]
                )));
            }
            let h = (list[list.len() - 1] - list[0]) / T::from_usize_lossy(list.len() - 1);
            let uniform = list.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= T::c(1e-9) * h.abs());
            if !uniform || !(h > T::zero()) {
                return Err(FieldError::Format(format!("axis `{}` is not an increasing uniform grid", names[axis])));
            }
            axes.push(Axis::open(list[0] - h / T::c(2.0), list[list.len() - 1] + h / T::c(2.0)));
        }
        let domain = Domain::new(kind, axes)?;
        let expected = Field::cell_centers(&domain, &resolution);
        let mut p = vec![T::zero(); n_axes];
        for (cell, c) in coords.iter().enumerate() {
            unravel(cell, &resolution, &expected, &mut p);
            let close = p.iter().zip(c).enumerate().all(|(axis, (&a, &b))| {
                (a - b).abs() <= T::c(1e-9) * domain.axis(axis).len()
            });
            if !close {
                return Err(FieldError::Format(format!("row {} is out of row-major order", cell + 2)));
            }
        }
        Field::sampled(domain, shape, resolution, values)
    }

    pub fn descriptor(&self, csv: impl Into<String>) -> Result<FieldDescriptor<T>, FieldError> {
        let grid = self
            .grid()
            .ok_or_else(|| FieldError::Format("only sampled fields have a descriptor".into()))?;
        Ok(FieldDescriptor {
            domain: self.domain().clone(),
            shape: self.shape(),
            resolution: grid.resolution.clone(),
            csv: csv.into(),
        })
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`; returns the JSON path.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf, FieldError> {
        fs::create_dir_all(dir)?;
        let csv_name = format!("{stem}.csv");
        let desc = self.descriptor(&csv_name)?;
        self.write_csv(fs::File::create(dir.join(&csv_name))?)?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_string_pretty(&desc)?)?;
        Ok(json)
    }

    /// Loads a field from a JSON descriptor and its CSV. The descriptor's
    /// domain, shape and resolution take precedence over the CSV header.
    pub fn load(json: &Path) -> Result<Field<T>, FieldError> {
        let desc: FieldDescriptor<T> = serde_json::from_str(&fs::read_to_string(json)?)?;
        let csv_path = json.parent().unwrap_or(Path::new(".")).join(&desc.csv);
        let mut rdr = csv::Reader::from_path(csv_path)?;
        let n_axes = desc.domain.dim();
        let k = desc.shape.len();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != n_axes + k {
                return Err(FieldError::Format(format!("row {}: expected {} columns", line + 2, n_axes + k)));
            }
            for s in rec.iter().skip(n_axes) {
                let v: f64 = s
                    .trim()
                    .parse()
                    .map_err(|_| FieldError::Format(format!("row {}: `{s}` is not a number", line + 2)))?;
                values.push(T::c(v));
            }
        }
        Field::sampled(desc.domain, desc.shape, desc.resolution, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_space_time_vector() {
        let d = Domain::<f64>::space_time((0.0, 1.0), (-1.0, 1.0)).unwrap();
        let f = Field::analytic(d, Shape::Vector(2), |p, o| {
            o[0] = p[0] + p[1];
            o[1] = p[0] * p[1];
        })
        .unwrap()
        .sample(&[3, 5])
        .unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x,v0,v1\n"));
        let g = Field::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(g.shape(), Shape::Vector(2));
        assert_eq!(g.grid().unwrap().resolution, vec![3, 5]);
        for (a, b) in g.grid().unwrap().values.iter().zip(&f.grid().unwrap().values) {
            assert!((a - b).abs() < 1e-15);
        }
        let (ga, fa) = (g.domain().axis(1), f.domain().axis(1));
        assert!((ga.lo - fa.lo).abs() < 1e-12 && (ga.hi - fa.hi).abs() < 1e-12);
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let d = Domain::<f64>::interval(0.0, 2.0).unwrap();
        let f = Field::scalar_fn(d, |p| p[0] * p[0]).sample(&[1]).unwrap();
        let json = f.save(dir.path(), "sq").unwrap();
        let g = Field::<f64>::load(&json).unwrap();
        assert_eq!(g.grid(), f.grid());
        assert_eq!(g.domain(), f.domain());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        for text in [
            "x,w\n0.5,1\n",
            "x,v\n0.25,1\n0.5,2\n0.9,3\n",
            "x,v\n0.25,abc\n0.75,1\n",
            "q,v\n0.25,1\n0.75,1\n",
            "x,v\n0.5,1\n",
        ] {
            assert!(Field::<f64>::read_csv(text.as_bytes()).is_err(), "{text}");
        }
    }

    #[test]
    fn matrix_columns() {
        let cols: Vec<String> = ["v0_0", "v0_1", "v1_0", "v1_1"].iter().map(|s| s.to_string()).collect();
        assert_eq!(parse_shape(&cols).unwrap(), Shape::Matrix { rows: 2, cols: 2 });
    }
}
