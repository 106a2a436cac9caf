//! Adapter for the public RecGym gym-workout CSV.
//!
//! Expected columns: `Subject, Position, Session, A_x, A_y, A_z, G_x, G_y,
//! G_z, C_1, Workout`. Rows of one sensor position are grouped into one
//! recording per (subject, session) in file order. Workout names map to
//! labels by sorted name. The file carries no sample rate, so the caller
//! must supply one.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::{RawRecording, CHANNEL_NAMES, MAX_CLASSES};

const SOURCE_COLUMNS: [&str; 7] = ["A_x", "A_y", "A_z", "G_x", "G_y", "G_z", "C_1"];

#[derive(Debug, Clone, PartialEq)]
pub struct RecGymData {
    pub recordings: Vec<RawRecording>,
    /// Label index to workout name.
    pub classes: Vec<String>,
}

pub fn load_recgym(path: &Path, position: &str, rate_hz: f64) -> Result<RecGymData> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse { row: 0, message: e.to_string() })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema { column: name.to_string() })
    };
    let subject_col = col("Subject")?;
    let position_col = col("Position")?;
    let session_col = col("Session")?;
    let workout_col = col("Workout")?;
    let value_cols = SOURCE_COLUMNS.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;

    type Rows = (Vec<f64>, Vec<String>);
    let mut groups: BTreeMap<(String, String), Rows> = BTreeMap::new();
    let mut workouts = BTreeSet::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        let get = |c: usize| record.get(c).unwrap_or("");
        if !get(position_col).eq_ignore_ascii_case(position) {
            continue;
        }
        let entry = groups
            .entry((get(subject_col).to_string(), get(session_col).to_string()))
            .or_default();
        for &c in &value_cols {
            let v = get(c)
                .parse::<f64>()
                .map_err(|_| Error::Parse { row, message: format!("non-numeric `{}` in {}", get(c), &headers[c]) })?;
            entry.0.push(v);
        }
        let workout = get(workout_col).to_string();
        workouts.insert(workout.clone());
        entry.1.push(workout);
    }
    if groups.is_empty() {
        return Err(Error::InsufficientData(format!("no rows for position `{position}`")));
    }
    let classes: Vec<String> = workouts.into_iter().collect();
    if classes.len() > MAX_CLASSES {
        return Err(Error::config(format!("{} workouts exceed {MAX_CLASSES} classes", classes.len())));
    }
    let mut recordings = Vec::with_capacity(groups.len());
    for ((subject, session), (values, names)) in groups {
        let labels = names
            .iter()
            .map(|n| classes.binary_search(n).expect("collected above"))
            .collect();
        let samples = Array2::from_shape_vec((names.len(), CHANNEL_NAMES.len()), values)
            .expect("seven values per row");
        recordings.push(RawRecording::new(
            format!("subject{subject}"),
            format!("subject{subject}-session{session}"),
            rate_hz,
            CHANNEL_NAMES.iter().map(|c| c.to_string()).collect(),
            samples,
            labels,
        )?);
    }
    Ok(RecGymData { recordings, classes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_and_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("recgym.csv");
        let mut text = String::from("Subject,Position,Session,A_x,A_y,A_z,G_x,G_y,G_z,C_1,Workout\n");
        for (s, pos, w) in [(1, "wrist", "Squat"), (1, "wrist", "Squat"), (1, "leg", "Squat"), (2, "wrist", "Adductor"), (2, "wrist", "Squat")] {
            text.push_str(&format!("{s},{pos},1,0.1,0.2,0.3,1,2,3,0.5,{w}\n"));
        }
        std::fs::write(&path, text).unwrap();
        let data = load_recgym(&path, "Wrist", 20.0).unwrap();
        assert_eq!(data.classes, vec!["Adductor", "Squat"]);
        assert_eq!(data.recordings.len(), 2);
        assert_eq!(data.recordings[0].subject_id, "subject1");
        assert_eq!(data.recordings[0].labels, vec![1, 1]);
        assert_eq!(data.recordings[1].labels, vec![0, 1]);
        assert_eq!(data.recordings[1].samples[[0, 6]], 0.5);
        assert!(load_recgym(&path, "pocket", 20.0).is_err());
    }
}
