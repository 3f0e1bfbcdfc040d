use std::io::{Read, Write};

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::Deserialize;

use super::{FlightLog, ObservationSet, PoseSample};
use crate::error::{Error, Result};

/// One row of a flight-log CSV. Pose-only rows leave the field columns
/// empty, magnetometer-only rows leave the pose columns empty, and a row
/// carrying both is allowed when the timestamps coincide.
#[derive(Debug, Deserialize)]
struct LogRow {
    t_s: f64,
    px: Option<f64>,
    py: Option<f64>,
    pz: Option<f64>,
    qw: Option<f64>,
    qx: Option<f64>,
    qy: Option<f64>,
    qz: Option<f64>,
    bx_u_t: Option<f64>,
    by_u_t: Option<f64>,
    bz_u_t: Option<f64>,
}

const LOG_HEADER: [&str; 11] = [
    "t_s", "px", "py", "pz", "qw", "qx", "qy", "qz", "bx_uT", "by_uT", "bz_uT",
];
const OBS_HEADER: [&str; 7] = ["x", "y", "z", "bx_uT", "by_uT", "bz_uT", "t_s"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the merged pose/magnetometer stream in time order.
pub fn write_flight_log<W: Write>(log: &FlightLog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LOG_HEADER)?;
    let (mut i, mut j) = (0, 0);
    while i < log.poses.len() || j < log.mags.len() {
        let pose_t = log.poses.get(i).map(|p| p.t).unwrap_or(f64::INFINITY);
        let mag_t = log.mags.get(j).map(|m| m.t).unwrap_or(f64::INFINITY);
        let t = pose_t.min(mag_t);
        let mut row = vec![t.to_string()];
        if pose_t == t {
            let p = &log.poses[i];
            let q = p.attitude.quaternion();
            row.extend(
                [p.position.x, p.position.y, p.position.z, q.w, q.i, q.j, q.k]
                    .map(|v| v.to_string()),
            );
            i += 1;
        } else {
            row.extend(std::iter::repeat(String::new()).take(7));
        }
        if mag_t == t {
            let b = log.mags[j].field_body;
            row.extend([Some(b.x), Some(b.y), Some(b.z)].map(fmt_opt));
            j += 1;
        } else {
            row.extend(std::iter::repeat(String::new()).take(3));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn all_or_none<const N: usize>(
    vals: [Option<f64>; N],
    line: usize,
    what: &str,
) -> Result<Option<[f64; N]>> {
    if vals.iter().all(Option::is_some) {
        Ok(Some(vals.map(|v| v.unwrap_or_default())))
    } else if vals.iter().all(Option::is_none) {
        Ok(None)
    } else {
        Err(Error::Parse {
            line,
            message: format!("partially filled {what} columns"),
        })
    }
}

/// Reads a flight-log CSV. Pose ages are derived from the pose stream.
pub fn read_flight_log<R: Read>(id: impl Into<String>, reader: R) -> Result<FlightLog> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(LOG_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", LOG_HEADER.join(",")),
        });
    }
    let mut poses = Vec::new();
    let mut mags = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        let row: LogRow = rec.deserialize(None).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let pose = all_or_none(
            [row.px, row.py, row.pz, row.qw, row.qx, row.qy, row.qz],
            line,
            "pose",
        )?;
        let mag = all_or_none([row.bx_u_t, row.by_u_t, row.bz_u_t], line, "field")?;
        if pose.is_none() && mag.is_none() {
            return Err(Error::Parse {
                line,
                message: "row carries neither pose nor field".into(),
            });
        }
        if let Some([px, py, pz, qw, qx, qy, qz]) = pose {
            let q = Quaternion::new(qw, qx, qy, qz);
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Parse {
                    line,
                    message: format!("quaternion norm {} is not 1", q.norm()),
                });
            }
            poses.push(PoseSample::new(
                row.t_s,
                Vector3::new(px, py, pz),
                UnitQuaternion::new_unchecked(q),
            ));
        }
        if let Some([bx, by, bz]) = mag {
            mags.push((row.t_s, Vector3::new(bx, by, bz)));
        }
    }
    FlightLog::from_streams(id, poses, mags)
}

pub fn write_observations<W: Write>(obs: &ObservationSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(OBS_HEADER)?;
    for i in 0..obs.len() {
        let (p, b) = (obs.locations[i], obs.measurements[i]);
        w.write_record(
            [p[0], p[1], p[2], b[0], b[1], b[2], obs.timestamps[i]].map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_observations<R: Read>(source: impl Into<String>, reader: R) -> Result<ObservationSet> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().ne(OBS_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", OBS_HEADER.join(",")),
        });
    }
    let mut obs = ObservationSet {
        sources: vec![source.into()],
        ..Default::default()
    };
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let row: [f64; 7] = rec?.deserialize(None).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        obs.locations.push([row[0], row[1], row[2]]);
        obs.measurements.push([row[3], row[4], row[5]]);
        obs.timestamps.push(row[6]);
    }
    obs.validate()?;
    Ok(obs)
}
