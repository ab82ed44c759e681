//! Run-log CSV files: one row per trial.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plan::structure_from_label;
use crate::agents::Choice;
use crate::bandit::RewardStructure;
use crate::error::{Error, Result};
use crate::session::{RunLog, TrialRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLogRecord {
    pub condition_id: String,
    pub agent: String,
    pub reward_structure: String,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
    pub run_id: u64,
    pub trial: u32,
    pub choice: String,
    pub reward: u8,
    pub raw_token: String,
    pub valid: bool,
}

/// Condition-level fields repeated on every row.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionMeta {
    pub condition_id: String,
    pub agent: String,
    pub structure: RewardStructure,
    pub temperature: Option<f64>,
    pub top_p: Option<f64>,
}

/// Runs of one condition as read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionLogs {
    pub meta: ConditionMeta,
    pub runs: Vec<RunLog>,
    pub source: PathBuf,
}

pub fn write_run_logs<W: Write>(w: W, meta: &ConditionMeta, runs: &[RunLog]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for run in runs {
        for t in &run.trials {
            wtr.serialize(RunLogRecord {
                condition_id: meta.condition_id.clone(),
                agent: meta.agent.clone(),
                reward_structure: meta.structure.label.clone(),
                temperature: meta.temperature,
                top_p: meta.top_p,
                run_id: run.run_id,
                trial: t.trial,
                choice: t.choice.as_str().to_string(),
                reward: t.reward,
                raw_token: t.raw_token.clone().unwrap_or_default(),
                valid: t.choice.is_valid(),
            })?;
        }
    }
    wtr.flush().map_err(|e| Error::io(&meta.condition_id, e))?;
    Ok(())
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

/// Reads one run-log CSV. A file may hold several conditions.
pub fn read_run_logs(path: &Path) -> Result<Vec<ConditionLogs>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers().map_err(|e| parse_err(path, 1, e.to_string()))?.clone();
    let mut conditions: Vec<ConditionLogs> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let row: RunLogRecord =
            record.deserialize(Some(&headers)).map_err(|e| parse_err(path, line, e.to_string()))?;
        let choice = Choice::parse_label(&row.choice)
            .ok_or_else(|| parse_err(path, line, format!("unknown choice `{}`", row.choice)))?;
        if choice.is_valid() != row.valid {
            return Err(parse_err(path, line, "`valid` disagrees with `choice`"));
        }
        if row.reward > 1 || (!choice.is_valid() && row.reward != 0) {
            return Err(parse_err(path, line, format!("reward {} not allowed here", row.reward)));
        }
        let slot = match index.get(&row.condition_id) {
            Some(&i) => i,
            None => {
                let structure = structure_from_label(&row.reward_structure)
                    .map_err(|e| parse_err(path, line, e.to_string()))?;
                conditions.push(ConditionLogs {
                    meta: ConditionMeta {
                        condition_id: row.condition_id.clone(),
                        agent: row.agent.clone(),
                        structure,
                        temperature: row.temperature,
                        top_p: row.top_p,
                    },
                    runs: Vec::new(),
                    source: path.to_path_buf(),
                });
                index.insert(row.condition_id.clone(), conditions.len() - 1);
                conditions.len() - 1
            }
        };
        let cond = &mut conditions[slot];
        if cond.meta.structure.label != row.reward_structure || cond.meta.agent != row.agent {
            return Err(parse_err(path, line, "condition fields change within a condition"));
        }
        let new_run = cond.runs.last().map_or(true, |r| r.run_id != row.run_id);
        if new_run {
            if cond.runs.iter().any(|r| r.run_id == row.run_id) {
                return Err(parse_err(path, line, format!("run {} is not contiguous", row.run_id)));
            }
            cond.runs.push(RunLog {
                condition_id: row.condition_id.clone(),
                run_id: row.run_id,
                structure: cond.meta.structure.clone(),
                trials: Vec::new(),
            });
        }
        let run = cond.runs.last_mut().expect("run just ensured");
        let expected = run.trials.len() as u32 + 1;
        if row.trial != expected {
            return Err(parse_err(
                path,
                line,
                format!("run {}: expected trial {expected}, found {}", row.run_id, row.trial),
            ));
        }
        run.trials.push(TrialRecord {
            trial: row.trial,
            choice,
            reward: row.reward,
            raw_token: (!row.raw_token.is_empty()).then_some(row.raw_token),
        });
    }
    Ok(conditions)
}

/// Expands directories into the `.csv` files they contain (sorted), and
/// checks that every path exists.
pub fn collect_csv_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            out.extend(files);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(Error::MissingInput(p.clone()));
        }
    }
    Ok(out)
}

/// Loads every condition found under `inputs`.
pub fn load_conditions(inputs: &[PathBuf]) -> Result<Vec<ConditionLogs>> {
    let mut all: Vec<ConditionLogs> = Vec::new();
    for path in collect_csv_paths(inputs)? {
        for cond in read_run_logs(&path)? {
            if let Some(prev) = all.iter().find(|c| c.meta.condition_id == cond.meta.condition_id) {
                return Err(Error::invalid(format!(
                    "condition `{}` appears in both {} and {}",
                    cond.meta.condition_id,
                    prev.source.display(),
                    path.display()
                )));
            }
            all.push(cond);
        }
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Choice::*;

    fn meta() -> ConditionMeta {
        ConditionMeta {
            condition_id: "c1".into(),
            agent: "mock".into(),
            structure: RewardStructure::asymmetric(),
            temperature: Some(1.0),
            top_p: Some(0.5),
        }
    }

    fn runs() -> Vec<RunLog> {
        (0..2)
            .map(|id| {
                let mut r = RunLog::from_pairs(RewardStructure::asymmetric(), &[(X, 1), (Invalid, 0), (Y, 0)]);
                r.run_id = id;
                r.condition_id = "c1".into();
                r.trials[1].raw_token = Some("Planet".into());
                r
            })
            .collect()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c1.csv");
        let mut buf = Vec::new();
        write_run_logs(&mut buf, &meta(), &runs()).unwrap();
        std::fs::write(&path, &buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "condition_id,agent,reward_structure,temperature,top_p,run_id,trial,choice,reward,raw_token,valid\n\
             c1,mock,asymmetric,1.0,0.5,0,1,X,1,,true\nc1,mock,asymmetric,1.0,0.5,0,2,Invalid,0,Planet,false\n"
        ));
        let back = read_run_logs(&path).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0].meta, meta());
        assert_eq!(back[0].runs, runs());
    }

    #[test]
    fn errors_name_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let mut buf = Vec::new();
        write_run_logs(&mut buf, &meta(), &runs()).unwrap();
        let text = String::from_utf8(buf).unwrap().replacen(",2,Invalid,", ",3,Invalid,", 1);
        std::fs::write(&path, text).unwrap();
        let err = read_run_logs(&path).unwrap_err();
        match &err {
            Error::Parse { path: p, line, .. } => {
                assert_eq!(p, &path);
                assert_eq!(*line, 3);
            }
            other => panic!("{other}"),
        }
        assert!(err.to_string().contains("bad.csv:3"));

        std::fs::write(&path, "condition_id,agent\nx,y\n").unwrap();
        assert!(matches!(read_run_logs(&path), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(
            collect_csv_paths(&[dir.path().join("nope.csv")]),
            Err(Error::MissingInput(_))
        ));
    }
}
