//! Trace CSV: `traj_id,t_s,x_m,y_m`, rows grouped by trajectory and sorted
//! by time, floats printed with 6 decimals.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::trajectory::{TrajPoint, Trajectory};

pub const TRACE_HEADER: [&str; 4] = ["traj_id", "t_s", "x_m", "y_m"];

pub fn write_traces<W: Write>(trajs: &[Trajectory], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::Parse { line: 0, msg: e.to_string() };
    w.write_record(TRACE_HEADER).map_err(err)?;
    for (id, traj) in trajs.iter().enumerate() {
        for p in traj.points() {
            w.write_record(&[
                id.to_string(),
                format!("{:.6}", p.t),
                format!("{:.6}", p.x),
                format!("{:.6}", p.y),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

pub fn read_traces<R: Read>(input: R) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rdr.headers().map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if header.iter().map(str::trim).ne(TRACE_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header {}", TRACE_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    let mut cur_id: Option<u64> = None;
    let mut seen = std::collections::HashSet::new();
    let mut pts: Vec<TrajPoint> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 4 fields, found {}", rec.len()),
            });
        }
        let id: u64 = rec[0].trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("bad traj_id {:?}", &rec[0]),
        })?;
        let mut v = [0.0; 3];
        for (k, slot) in v.iter_mut().enumerate() {
            let s = rec[k + 1].trim();
            *slot = s.parse().ok().filter(|x: &f64| x.is_finite()).ok_or_else(|| Error::Parse {
                line,
                msg: format!("bad {} value {s:?}", TRACE_HEADER[k + 1]),
            })?;
        }
        let p = TrajPoint::new(v[0], v[1], v[2]);
        if cur_id != Some(id) {
            if !seen.insert(id) {
                return Err(Error::Validation {
                    line,
                    msg: format!("rows of trajectory {id} are not contiguous"),
                });
            }
            if !pts.is_empty() {
                out.push(Trajectory::from_sorted_unchecked(std::mem::take(&mut pts)));
            }
            cur_id = Some(id);
        } else if let Some(last) = pts.last() {
            if !(p.t > last.t) {
                return Err(Error::Validation {
                    line,
                    msg: format!("timestamp {} does not exceed {} in trajectory {id}", p.t, last.t),
                });
            }
        }
        pts.push(p);
    }
    if !pts.is_empty() {
        out.push(Trajectory::from_sorted_unchecked(pts));
    }
    Ok(out)
}

pub fn save_traces(trajs: &[Trajectory], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_traces(trajs, std::io::BufWriter::new(f))
}

pub fn load_traces(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_traces(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::mobility::rwp_trajectory;
    use crate::geom::BBox;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn header_only_is_empty() {
        let t = read_traces("traj_id,t_s,x_m,y_m\n".as_bytes()).unwrap();
        assert!(t.is_empty());
        let mut buf = Vec::new();
        write_traces(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "traj_id,t_s,x_m,y_m\n");
    }

    #[test]
    fn round_trip_100() {
        let mut rng = SimRng::seed_from_u64(11);
        let area = BBox::from_area(2000.0, 2000.0);
        let trajs: Vec<_> = (0..100).map(|_| rwp_trajectory(&mut rng, area, (1.0, 15.0), 60.0, 1.0)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        save_traces(&trajs, &path).unwrap();
        let back = load_traces(&path).unwrap();
        assert_eq!(back.len(), 100);
        for (a, b) in trajs.iter().zip(&back) {
            assert_eq!(a.len(), b.len());
            for (p, q) in a.points().iter().zip(b.points()) {
                assert!((p.t - q.t).abs() <= 5e-7);
                assert!((p.x - q.x).abs() <= 5e-7 && (p.y - q.y).abs() <= 5e-7);
            }
        }
    }

    #[test]
    fn decreasing_time_reports_line() {
        let csv = "traj_id,t_s,x_m,y_m\n0,0.0,1,1\n0,1.0,2,2\n0,0.5,3,3\n";
        match read_traces(csv.as_bytes()) {
            Err(Error::Validation { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "traj_id,t_s,x_m,y_m\n0,0.0,1,1\n0,abc,2,2\n";
        match read_traces(csv.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let csv = "traj_id,t_s,x_m,y_m\n0,0.0,1\n";
        assert!(matches!(read_traces(csv.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn bad_header_rejected() {
        assert!(read_traces("id,t,x,y\n".as_bytes()).is_err());
    }
}
