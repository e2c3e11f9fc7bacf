//! Labeling, featurization and the CSV layouts shared by the CLI and the
//! experiment driver.

use std::time::Instant;

use rayon::prelude::*;

use crate::channel::{generate_range, ChannelObject, ScenarioConfig, UserCount};
use crate::error::{Error, Result};
use crate::features::{assemble_raw, assemble_user, check_compatible, extract_raw, FeatureSpec};
use crate::harness::config::TargetMode;
use crate::mimo::{ground_truth, DetectorKind, PrecoderKind};
use crate::table::Table;

/// Ground truth for one object of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    /// Position of the object in its dataset.
    pub index: usize,
    pub num_users: usize,
    pub se_avg: f64,
    pub se_user: Vec<f64>,
    pub susinr: f64,
    pub sigma2: f64,
    /// Wall-clock seconds spent computing this label.
    pub seconds: f64,
}

/// Labels of a dataset plus the objects that could not be labeled.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelSet {
    pub labels: Vec<Label>,
    pub dropped: Vec<usize>,
}

fn is_droppable(e: &Error) -> bool {
    matches!(
        e,
        Error::Conditioning(_) | Error::RankDeficient { .. } | Error::NonFinite(_)
    )
}

/// Computes ground truth for every object in parallel. Objects whose
/// labeling fails numerically are dropped and listed; any other error aborts.
pub fn label_objects(objects: &[ChannelObject], precoder: PrecoderKind, detector: DetectorKind) -> Result<LabelSet> {
    let results: Vec<Result<Option<Label>>> = objects
        .par_iter()
        .enumerate()
        .map(|(index, obj)| {
            let start = Instant::now();
            match ground_truth(obj, precoder, detector) {
                Ok(r) => Ok(Some(Label {
                    index,
                    num_users: obj.num_users(),
                    se_avg: r.se_avg,
                    se_user: r.se_user,
                    susinr: r.susinr,
                    sigma2: r.sigma2,
                    seconds: start.elapsed().as_secs_f64(),
                })),
                Err(e) if is_droppable(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut set = LabelSet {
        labels: Vec::with_capacity(objects.len()),
        dropped: Vec::new(),
    };
    for (i, r) in results.into_iter().enumerate() {
        match r? {
            Some(l) => set.labels.push(l),
            None => set.dropped.push(i),
        }
    }
    if set.labels.is_empty() {
        return Err(Error::Degenerate("no object could be labeled".into()));
    }
    Ok(set)
}

impl LabelSet {
    fn max_users(&self) -> usize {
        self.labels.iter().map(|l| l.num_users).max().unwrap_or(0)
    }

    /// Columns `index, k, se_avg, se_u0.., susinr, sigma2` and, when
    /// `with_timing`, `gt_seconds`. Missing users are left blank.
    pub fn to_table(&self, with_timing: bool) -> Table {
        let kmax = self.max_users();
        let mut cols = vec!["index".to_string(), "k".into(), "se_avg".into()];
        cols.extend((0..kmax).map(|u| format!("se_u{u}")));
        cols.push("susinr".into());
        cols.push("sigma2".into());
        if with_timing {
            cols.push("gt_seconds".into());
        }
        let mut t = Table::new(cols);
        for l in &self.labels {
            let mut row = vec![l.index as f64, l.num_users as f64, l.se_avg];
            row.extend((0..kmax).map(|u| l.se_user.get(u).copied().unwrap_or(f64::NAN)));
            row.push(l.susinr);
            row.push(l.sigma2);
            if with_timing {
                row.push(l.seconds);
            }
            t.push_row(&row).expect("row matches header");
        }
        t
    }

    pub fn from_table(table: &Table) -> Result<LabelSet> {
        let col = |name: &str| {
            table
                .column_index(name)
                .ok_or_else(|| Error::Format(format!("labels lack column {name:?}")))
        };
        let (ci, ck, cse, csus, csig) = (col("index")?, col("k")?, col("se_avg")?, col("susinr")?, col("sigma2")?);
        let ctime = table.column_index("gt_seconds");
        let mut labels = Vec::with_capacity(table.n_rows());
        for r in table.rows() {
            let k = r[ck] as usize;
            let se_user = (0..k)
                .map(|u| {
                    let c = col(&format!("se_u{u}"))?;
                    Ok(r[c])
                })
                .collect::<Result<Vec<f64>>>()?;
            if !(r[ci] >= 0.0) || se_user.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format("malformed label row".into()));
            }
            labels.push(Label {
                index: r[ci] as usize,
                num_users: k,
                se_avg: r[cse],
                se_user,
                susinr: r[csus],
                sigma2: r[csig],
                seconds: ctime.map_or(0.0, |c| r[c]),
            });
        }
        Ok(LabelSet {
            labels,
            dropped: Vec::new(),
        })
    }
}

/// A learning problem: features, targets and per-row bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub features: Table,
    /// Empty when the frame was built without labels.
    pub targets: Vec<f64>,
    pub object_index: Vec<usize>,
    pub num_users: Vec<usize>,
    /// Set in user-wise frames.
    pub user: Option<Vec<usize>>,
}

pub const TARGET_COLUMN: &str = "target";
const META_INDEX: &str = "meta_index";
const META_K: &str = "meta_k";
const META_USER: &str = "meta_user";

/// Features, target, object index, K and user of one frame row.
type Row = (Vec<f64>, f64, usize, usize, usize);

/// Builds the feature frame for `objects`. With labels, only labeled
/// objects are kept and targets are filled from them.
pub fn build_frame(
    objects: &[ChannelObject],
    labels: Option<&LabelSet>,
    spec: &FeatureSpec,
    mode: TargetMode,
) -> Result<Frame> {
    let (k0, l) = check_compatible(objects, spec)?;
    let chosen: Vec<(usize, Option<&Label>)> = match labels {
        Some(ls) => ls
            .labels
            .iter()
            .map(|lab| {
                let obj = objects
                    .get(lab.index)
                    .ok_or_else(|| Error::Format(format!("label index {} beyond dataset", lab.index)))?;
                if obj.num_users() != lab.num_users {
                    return Err(Error::Format(format!("label {} disagrees on K", lab.index)));
                }
                Ok((lab.index, Some(lab)))
            })
            .collect::<Result<_>>()?,
        None => (0..objects.len()).map(|i| (i, None)).collect(),
    };
    let rows: Vec<Vec<Row>> = chosen
        .par_iter()
        .map(|&(i, lab)| {
            let obj = &objects[i];
            let raw = extract_raw(obj)?;
            let k = obj.num_users();
            match mode {
                TargetMode::AverageSe => {
                    let x = assemble_raw(&raw, obj.sigma2, spec)?;
                    Ok(vec![(x, lab.map_or(f64::NAN, |l| l.se_avg), i, k, 0)])
                }
                TargetMode::UserWiseSe => (0..k)
                    .map(|u| {
                        let x = assemble_user(&raw, obj.sigma2, u, spec)?;
                        Ok((x, lab.map_or(f64::NAN, |l| l.se_user[u]), i, k, u))
                    })
                    .collect(),
            }
        })
        .collect::<Result<_>>()?;

    let names = match mode {
        TargetMode::AverageSe => spec.names(k0, l),
        TargetMode::UserWiseSe => spec.user_names(k0, l),
    };
    let mut frame = Frame {
        features: Table::new(names),
        targets: Vec::new(),
        object_index: Vec::new(),
        num_users: Vec::new(),
        user: (mode == TargetMode::UserWiseSe).then(Vec::new),
    };
    for (x, y, i, k, u) in rows.into_iter().flatten() {
        frame.features.push_row(&x)?;
        if labels.is_some() {
            frame.targets.push(y);
        }
        frame.object_index.push(i);
        frame.num_users.push(k);
        if let Some(us) = frame.user.as_mut() {
            us.push(u);
        }
    }
    Ok(frame)
}

impl Frame {
    pub fn len(&self) -> usize {
        self.features.n_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_targets(&self) -> bool {
        !self.targets.is_empty()
    }

    /// Features followed by `meta_*` bookkeeping columns and, if present,
    /// the `target` column.
    pub fn to_table(&self) -> Table {
        let mut cols = self.features.columns.clone();
        cols.push(META_INDEX.into());
        cols.push(META_K.into());
        if self.user.is_some() {
            cols.push(META_USER.into());
        }
        if self.has_targets() {
            cols.push(TARGET_COLUMN.into());
        }
        let mut t = Table::new(cols);
        for (r, x) in self.features.rows().enumerate() {
            let mut row = x.to_vec();
            row.push(self.object_index[r] as f64);
            row.push(self.num_users[r] as f64);
            if let Some(u) = &self.user {
                row.push(u[r] as f64);
            }
            if self.has_targets() {
                row.push(self.targets[r]);
            }
            t.push_row(&row).expect("row matches header");
        }
        t
    }

    /// Inverse of [`Frame::to_table`]. Tables without `meta_*` columns are
    /// accepted; bookkeeping then defaults to row order and K = 0.
    pub fn from_table(table: &Table) -> Result<Frame> {
        let is_meta = |c: &str| c.starts_with("meta_") || c == TARGET_COLUMN;
        let feat_cols: Vec<usize> = (0..table.n_cols()).filter(|&j| !is_meta(&table.columns[j])).collect();
        let features = table.select(&feat_cols);
        if features.n_rows() > 0 && features.rows().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature table"));
        }
        let get = |name: &str| table.column_index(name).map(|j| table.column(j));
        let n = table.n_rows();
        let to_usize = |v: Vec<f64>| v.into_iter().map(|x| x as usize).collect::<Vec<_>>();
        Ok(Frame {
            features,
            targets: get(TARGET_COLUMN).unwrap_or_default(),
            object_index: get(META_INDEX).map(to_usize).unwrap_or_else(|| (0..n).collect()),
            num_users: get(META_K).map(to_usize).unwrap_or_else(|| vec![0; n]),
            user: get(META_USER).map(to_usize),
        })
    }
}

/// Objects and labels for one split.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub objects: Vec<ChannelObject>,
    pub labels: LabelSet,
}

/// Generates and labels samples `start..start + n`.
pub fn generate_labeled(
    scenario: &ScenarioConfig,
    start: u64,
    n: usize,
    users: &UserCount,
    precoder: PrecoderKind,
    detector: DetectorKind,
) -> Result<LabeledSet> {
    let objects = generate_range(scenario, start, n, users).map_err(|e| e.in_stage("generate"))?;
    let labels = label_objects(&objects, precoder, detector).map_err(|e| e.in_stage("label"))?;
    Ok(LabeledSet { objects, labels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_dataset;
    use crate::features::FeatureScheme;

    #[test]
    fn labels_and_frames_round_trip_through_tables() {
        let cfg = ScenarioConfig::urban(3);
        let objs = generate_dataset(&cfg, 6, &UserCount::Set(vec![2, 3])).unwrap();
        let labels = label_objects(&objs, PrecoderKind::Zf, DetectorKind::Mmse).unwrap();
        let back = LabelSet::from_table(&labels.to_table(true)).unwrap();
        assert_eq!(back.labels, labels.labels);

        let spec = FeatureSpec::new(FeatureScheme::Poly(3));
        let frame = build_frame(&objs, Some(&labels), &spec, TargetMode::UserWiseSe).unwrap();
        let total: usize = labels.labels.iter().map(|l| l.num_users).sum();
        assert_eq!(frame.len(), total);
        assert_eq!(Frame::from_table(&frame.to_table()).unwrap(), frame);
    }
}
