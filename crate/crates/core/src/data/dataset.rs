use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::index::TimeIndex;
use super::{DataError, Lane, Road, RoadSpec, VehicleRecord, VehicleState, CLOSENESS_SPEED};

const HEADER: [&str; 7] = ["id", "road", "t", "x", "y", "lane", "vel"];

/// All samples of one vehicle, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: String,
    pub road: Road,
    pub samples: Vec<VehicleRecord>,
}

impl Track {
    pub fn first_t(&self) -> f64 {
        self.samples[0].t
    }

    pub fn last_t(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// State at `t`: position and speed are linear between the bracketing
    /// samples, lane and lateral offset come from the sample nearest in time.
    pub fn state_at(&self, t: f64) -> Option<VehicleState> {
        if !(t >= self.first_t() && t <= self.last_t()) {
            return None;
        }
        let i = self.samples.partition_point(|s| s.t < t);
        let hi = &self.samples[i];
        if hi.t == t {
            return Some(hi.clone());
        }
        let lo = &self.samples[i - 1];
        let w = (t - lo.t) / (hi.t - lo.t);
        let nearest = if t - lo.t <= hi.t - t { lo } else { hi };
        Some(VehicleState {
            id: self.id.clone(),
            road: self.road,
            t,
            x: lo.x + w * (hi.x - lo.x),
            y: nearest.y,
            lane: nearest.lane,
            vel: lo.vel + w * (hi.vel - lo.vel),
        })
    }
}

/// Immutable, indexed collection of empirical trajectories.
#[derive(Debug, Clone)]
pub struct Dataset {
    roadspec: RoadSpec,
    tracks: Vec<Track>,
    by_id: BTreeMap<String, usize>,
    index: TimeIndex,
    n_records: usize,
}

impl Dataset {
    /// Builds a dataset from unordered records, enforcing the record
    /// invariants. Errors report the record's position as if it were row
    /// `i + 2` of a CSV file.
    pub fn from_records(
        records: Vec<VehicleRecord>,
        roadspec: RoadSpec,
    ) -> Result<Dataset, DataError> {
        let lines: Vec<u64> = (0..records.len() as u64).map(|i| i + 2).collect();
        Self::build(records, lines, roadspec)
    }

    fn build(
        records: Vec<VehicleRecord>,
        lines: Vec<u64>,
        roadspec: RoadSpec,
    ) -> Result<Dataset, DataError> {
        roadspec.validate().map_err(DataError::RoadSpec)?;
        let n_records = records.len();
        let mut grouped: BTreeMap<String, (Road, Vec<(u64, VehicleRecord)>)> = BTreeMap::new();
        for (rec, line) in records.into_iter().zip(lines) {
            check_record(&rec, line, &roadspec)?;
            let entry = grouped
                .entry(rec.id.clone())
                .or_insert_with(|| (rec.road, Vec::new()));
            if entry.0 != rec.road {
                return Err(DataError::RoadMismatch { line, id: rec.id });
            }
            entry.1.push((line, rec));
        }

        let mut tracks = Vec::with_capacity(grouped.len());
        let mut by_id = BTreeMap::new();
        for (id, (road, mut samples)) in grouped {
            samples.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));
            for pair in samples.windows(2) {
                if pair[0].1.t == pair[1].1.t {
                    let (line, rec) = &pair[1];
                    return Err(DataError::Duplicate {
                        line: *line,
                        id: rec.id.clone(),
                        t: rec.t,
                    });
                }
            }
            by_id.insert(id.clone(), tracks.len());
            tracks.push(Track {
                id,
                road,
                samples: samples.into_iter().map(|(_, r)| r).collect(),
            });
        }
        let index = TimeIndex::build(
            tracks
                .iter()
                .enumerate()
                .map(|(i, tr)| (i, tr.road, tr.first_t(), tr.last_t())),
        );
        Ok(Dataset {
            roadspec,
            tracks,
            by_id,
            index,
            n_records,
        })
    }

    pub fn empty(roadspec: RoadSpec) -> Dataset {
        Dataset::from_records(Vec::new(), roadspec).expect("empty dataset is valid")
    }

    pub fn roadspec(&self) -> &RoadSpec {
        &self.roadspec
    }

    pub fn len(&self) -> usize {
        self.n_records
    }

    pub fn is_empty(&self) -> bool {
        self.n_records == 0
    }

    /// Tracks ordered by vehicle id.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn track(&self, id: &str) -> Option<&Track> {
        self.by_id.get(id).map(|&i| &self.tracks[i])
    }

    pub fn records(&self) -> impl Iterator<Item = &VehicleRecord> {
        self.tracks.iter().flat_map(|t| t.samples.iter())
    }

    /// `[t_min, t_max]` over all records, or `None` when empty.
    pub fn t_span(&self) -> Option<(f64, f64)> {
        self.tracks.iter().fold(None, |acc, tr| {
            let (a, b) = (tr.first_t(), tr.last_t());
            Some(match acc {
                None => (a, b),
                Some((lo, hi)) => (f64::min(lo, a), f64::max(hi, b)),
            })
        })
    }

    pub fn interpolate_state(&self, id: &str, t: f64) -> Option<VehicleState> {
        self.track(id)?.state_at(t)
    }

    /// Every vehicle on `road` whose interpolated position at `t` lies in
    /// `[x_lo, x_hi]`, ordered by id.
    pub fn query_interval(&self, road: Road, t: f64, x_lo: f64, x_hi: f64) -> Vec<VehicleState> {
        self.index
            .candidates(road, t)
            .iter()
            .filter_map(|&i| self.tracks[i].state_at(t))
            .filter(|s| s.x >= x_lo && s.x <= x_hi)
            .collect()
    }

    /// Spatiotemporally closest state on `road` in `lane`, ranking by
    /// `|dx| + 30 m/s * |dt|`, ties broken by `|dt|` then id.
    ///
    /// The distance is piecewise linear along each interpolated trajectory,
    /// so its minimum sits at a sample knot, at the requested time, or where
    /// the trajectory crosses the requested position. All three are tried.
    pub fn find_closest_vehicle(
        &self,
        road: Road,
        lane: Lane,
        x: f64,
        t: f64,
    ) -> Result<VehicleState, DataError> {
        let mut best: Option<(f64, f64, VehicleState)> = None;
        let mut consider = |s: VehicleState| {
            if s.lane != lane {
                return;
            }
            let dt = (s.t - t).abs();
            let d = (s.x - x).abs() + CLOSENESS_SPEED * dt;
            let better = match &best {
                None => true,
                Some((bd, bdt, bs)) => {
                    d < *bd || (d == *bd && (dt < *bdt || (dt == *bdt && s.id < bs.id)))
                }
            };
            if better {
                best = Some((d, dt, s));
            }
        };
        for tr in self.tracks.iter().filter(|tr| tr.road == road) {
            for s in &tr.samples {
                consider(s.clone());
            }
            if let Some(s) = tr.state_at(t) {
                consider(s);
            }
            for pair in tr.samples.windows(2) {
                let (a, b) = (&pair[0], &pair[1]);
                if a.x != b.x && (a.x - x) * (b.x - x) < 0.0 {
                    let tc = a.t + (x - a.x) / (b.x - a.x) * (b.t - a.t);
                    if let Some(s) = tr.state_at(tc) {
                        consider(s);
                    }
                }
            }
        }
        best.map(|(_, _, s)| s)
            .ok_or(DataError::NoCandidate { road, lane })
    }

    /// Writes the dataset in the ingestion schema, ordered by id then time.
    pub fn export_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(HEADER).map_err(csv_err)?;
        for rec in self.records() {
            wtr.write_record([
                rec.id.clone(),
                rec.road.to_string(),
                rec.t.to_string(),
                rec.x.to_string(),
                rec.y.to_string(),
                rec.lane.to_string(),
                rec.vel.to_string(),
            ])
            .map_err(csv_err)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> DataError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DataError::Io(io),
        other => DataError::Malformed {
            line,
            msg: format!("{other:?}"),
        },
    }
}

fn check_record(rec: &VehicleRecord, line: u64, spec: &RoadSpec) -> Result<(), DataError> {
    for (name, v) in [("t", rec.t), ("x", rec.x), ("y", rec.y), ("vel", rec.vel)] {
        if !v.is_finite() {
            return Err(DataError::Malformed {
                line,
                msg: format!("{name} is not a finite number"),
            });
        }
    }
    if rec.id.is_empty() {
        return Err(DataError::Malformed {
            line,
            msg: "empty vehicle id".into(),
        });
    }
    if !spec.has_lane(rec.lane) {
        return Err(DataError::Lane {
            line,
            value: rec.lane.id() as i64,
        });
    }
    if rec.x < 0.0 || rec.x > spec.length {
        return Err(DataError::Position {
            line,
            x: rec.x,
            length: spec.length,
        });
    }
    if rec.vel < 0.0 {
        return Err(DataError::NegativeVelocity { line, vel: rec.vel });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(
    row: &csv::StringRecord,
    i: usize,
    line: u64,
) -> Result<T, DataError> {
    let raw = row.get(i).unwrap_or("");
    raw.parse().map_err(|_| DataError::Malformed {
        line,
        msg: format!("cannot parse {} from {raw:?}", HEADER[i]),
    })
}

/// Parses the `id,road,t,x,y,lane,vel` CSV schema.
pub fn load_dataset<R: Read>(source: R, roadspec: RoadSpec) -> Result<Dataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(DataError::Header(
            header.iter().collect::<Vec<_>>().join(","),
        ));
    }
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(csv_err)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != HEADER.len() {
            return Err(DataError::Malformed {
                line,
                msg: format!("expected {} fields, found {}", HEADER.len(), row.len()),
            });
        }
        let road: Road = row[1]
            .parse()
            .map_err(|msg| DataError::Malformed { line, msg })?;
        let lane_raw: i64 = parse_field(&row, 5, line)?;
        let lane = Lane::new(lane_raw).ok_or(DataError::Lane {
            line,
            value: lane_raw,
        })?;
        records.push(VehicleRecord {
            id: row[0].to_string(),
            road,
            t: parse_field(&row, 2, line)?,
            x: parse_field(&row, 3, line)?,
            y: parse_field(&row, 4, line)?,
            lane,
            vel: parse_field(&row, 6, line)?,
        });
        lines.push(line);
    }
    Dataset::build(records, lines, roadspec)
}

pub fn load_dataset_file(path: &Path, roadspec: RoadSpec) -> Result<Dataset, DataError> {
    load_dataset(File::open(path)?, roadspec)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HDR: &str = "id,road,t,x,y,lane,vel\n";

    fn load(body: &str) -> Result<Dataset, DataError> {
        load_dataset(format!("{HDR}{body}").as_bytes(), RoadSpec::i24())
    }

    fn rec(id: &str, t: f64, x: f64, lane: i64, vel: f64) -> VehicleRecord {
        VehicleRecord {
            id: id.into(),
            road: Road::Westbound,
            t,
            x,
            y: 0.0,
            lane: Lane::new(lane).unwrap(),
            vel,
        }
    }

    fn ds(recs: Vec<VehicleRecord>) -> Dataset {
        Dataset::from_records(recs, RoadSpec::i24()).unwrap()
    }

    #[test]
    fn header_only_is_empty() {
        let d = load("").unwrap();
        assert_eq!(d.len(), 0);
        assert!(d.t_span().is_none());
    }

    #[test]
    fn single_row() {
        let d = load("veh1,Westbound,100.0,300.0,3.7,-2,30.0\n").unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.t_span(), Some((100.0, 100.0)));
        let s = d.interpolate_state("veh1", 100.0).unwrap();
        assert_eq!((s.x, s.y, s.lane.id(), s.vel), (300.0, 3.7, -2, 30.0));
    }

    #[test]
    fn crlf_accepted() {
        let d = load_dataset(
            "id,road,t,x,y,lane,vel\r\nveh1,Eastbound,1,2,3,-1,4\r\n".as_bytes(),
            RoadSpec::i24(),
        )
        .unwrap();
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn bad_lane_names_row() {
        let err = load("a,Westbound,0,1,0,-1,1\nb,Westbound,0,1,0,-5,1\n").unwrap_err();
        assert!(
            matches!(err, DataError::Lane { line: 3, value: -5 }),
            "{err}"
        );
        assert!(err.to_string().contains("line 3"));
    }

    #[test]
    fn rejects_invalid_rows() {
        assert!(matches!(
            load("a,Westbound,0,1700,0,-1,1\n").unwrap_err(),
            DataError::Position { line: 2, .. }
        ));
        assert!(matches!(
            load("a,Westbound,0,-0.5,0,-1,1\n").unwrap_err(),
            DataError::Position { .. }
        ));
        assert!(matches!(
            load("a,Westbound,0,1,0,-1,-1\n").unwrap_err(),
            DataError::NegativeVelocity { line: 2, .. }
        ));
        assert!(matches!(
            load("a,Westbound,0,1,0,-1,1\na,Westbound,0,2,0,-1,1\n").unwrap_err(),
            DataError::Duplicate { line: 3, .. }
        ));
        assert!(matches!(
            load("a,Westbound,zero,1,0,-1,1\n").unwrap_err(),
            DataError::Malformed { line: 2, .. }
        ));
        assert!(matches!(
            load("a,Southbound,0,1,0,-1,1\n").unwrap_err(),
            DataError::Malformed { line: 2, .. }
        ));
        assert!(matches!(
            load("a,Westbound,0,1,0,-1\n").unwrap_err(),
            DataError::Malformed { .. }
        ));
        assert!(matches!(
            load_dataset("id,t,x\n".as_bytes(), RoadSpec::i24()).unwrap_err(),
            DataError::Header(_)
        ));
    }

    #[test]
    fn interpolation_midpoint_and_knots() {
        let d = ds(vec![
            rec("a", 0.0, 0.0, -1, 10.0),
            rec("a", 1.0, 10.0, -1, 10.0),
        ]);
        let s = d.interpolate_state("a", 0.5).unwrap();
        assert_eq!((s.x, s.vel), (5.0, 10.0));
        let k = d.interpolate_state("a", 1.0).unwrap();
        assert_eq!(k, rec("a", 1.0, 10.0, -1, 10.0));
        assert!(d.interpolate_state("a", 1.01).is_none());
        assert!(d.interpolate_state("a", -0.01).is_none());
        assert!(d.interpolate_state("zz", 0.5).is_none());
    }

    #[test]
    fn interpolation_accelerating() {
        // hand-evaluated: x(1) = 0 + 0.5 * (4 - 0), vel(1) = 0 + 0.5 * (4 - 0)
        let d = ds(vec![
            rec("a", 0.0, 0.0, -1, 0.0),
            rec("a", 2.0, 4.0, -1, 4.0),
        ]);
        let s = d.interpolate_state("a", 1.0).unwrap();
        assert_eq!((s.x, s.vel), (2.0, 2.0));
    }

    #[test]
    fn lane_from_nearest_sample() {
        let d = ds(vec![
            rec("a", 0.0, 0.0, -1, 10.0),
            rec("a", 1.0, 10.0, -2, 10.0),
        ]);
        assert_eq!(d.interpolate_state("a", 0.4).unwrap().lane.id(), -1);
        assert_eq!(d.interpolate_state("a", 0.6).unwrap().lane.id(), -2);
    }

    #[test]
    fn interval_queries() {
        let d = ds(vec![
            rec("a", 0.0, 450.0, -1, 100.0),
            rec("a", 1.0, 550.0, -1, 100.0),
        ]);
        let hit = d.query_interval(Road::Westbound, 0.5, 400.0, 600.0);
        assert_eq!(hit.len(), 1);
        assert_eq!(hit[0].x, 500.0);
        assert!(d
            .query_interval(Road::Westbound, 0.5, 600.0, 700.0)
            .is_empty());
        assert!(d
            .query_interval(Road::Eastbound, 0.5, 0.0, 1600.0)
            .is_empty());
    }

    #[test]
    fn closest_single_candidate() {
        let d = ds(vec![rec("far", 500.0, 1500.0, -3, 10.0)]);
        let s = d
            .find_closest_vehicle(Road::Westbound, Lane::new(-3).unwrap(), 0.0, 0.0)
            .unwrap();
        assert_eq!(s.id, "far");
    }

    #[test]
    fn closest_uses_weighted_distance() {
        // d(a) = 10 + 30 * 0 = 10, d(b) = 0 + 30 * 1 = 30
        let d = ds(vec![
            rec("a", 100.0, 310.0, -2, 10.0),
            rec("b", 101.0, 300.0, -2, 10.0),
        ]);
        let s = d
            .find_closest_vehicle(Road::Westbound, Lane::new(-2).unwrap(), 300.0, 100.0)
            .unwrap();
        assert_eq!(s.id, "a");
    }

    #[test]
    fn closest_ties_by_dt_then_id() {
        // both at d = 30: a via dx, b via dt
        let d = ds(vec![
            rec("b", 100.0, 330.0, -2, 0.0),
            rec("a", 101.0, 300.0, -2, 0.0),
        ]);
        let s = d
            .find_closest_vehicle(Road::Westbound, Lane::new(-2).unwrap(), 300.0, 100.0)
            .unwrap();
        assert_eq!(s.id, "b");
        let d = ds(vec![
            rec("b", 100.0, 310.0, -2, 0.0),
            rec("a", 100.0, 290.0, -2, 0.0),
        ]);
        let s = d
            .find_closest_vehicle(Road::Westbound, Lane::new(-2).unwrap(), 300.0, 100.0)
            .unwrap();
        assert_eq!(s.id, "a");
    }

    #[test]
    fn closest_lane_must_match() {
        let d = ds(vec![rec("a", 0.0, 300.0, -2, 10.0)]);
        let err = d
            .find_closest_vehicle(Road::Westbound, Lane::new(-1).unwrap(), 300.0, 0.0)
            .unwrap_err();
        assert!(matches!(err, DataError::NoCandidate { .. }));
    }

    #[test]
    fn closest_interpolates_between_samples() {
        let d = ds(vec![
            rec("a", 0.0, 0.0, -1, 20.0),
            rec("a", 10.0, 200.0, -1, 20.0),
        ]);
        let s = d
            .find_closest_vehicle(Road::Westbound, Lane::HOV, 100.0, 5.0)
            .unwrap();
        assert_eq!((s.t, s.x), (5.0, 100.0));
    }

    #[test]
    fn export_round_trip() {
        let d = load("b,Eastbound,1.25,3.5,1.85,-1,0.1\na,Westbound,0.5,2,5.55,-2,30\n").unwrap();
        let mut buf = Vec::new();
        d.export_csv(&mut buf).unwrap();
        let back = load_dataset(buf.as_slice(), RoadSpec::i24()).unwrap();
        assert_eq!(back.tracks(), d.tracks());
    }
}
