//! Line-based text format for episode documents.
//!
//! A document is a sequence of non-empty lines; lines starting with `#`
//! outside the `map` block are comments. Sections may appear in any
//! order, each at most once:
//!
//! ```text
//! id <string>
//! map
//! resolution <f64>
//! <row of . and # characters, one per cell; first row is the top of
//!  the map (largest y), last row is y = 0>
//! ...
//! end
//! landmarks
//! <id> "<name>" <x> <y> <radius>
//! ...
//! end
//! start <x> <y> <yaw>
//! goal <x> <y>
//! instruction <free text to end of line>
//! subtasks
//! reach <x> <y> <radius> "<text>"
//! face <landmark_id> <max_angle> <max_range> "<text>"
//! ...
//! end
//! success_radius <f64>
//! ```
//!
//! `id`, `map`, `start`, `goal`, `instruction`, and `subtasks` are
//! required; `landmarks` defaults to empty and `success_radius` to 3.0.
//! Unknown keys are rejected.

use super::{
    Episode, Landmark, Subtask, SubtaskPredicate, WorldMap, DEFAULT_SUCCESS_RADIUS,
};
use crate::geometry::Pose2D;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
#[error("episode field `{field}`: {message}")]
pub struct SchemaError {
    pub field: String,
    pub message: String,
}

impl SchemaError {
    pub(crate) fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

fn parse_f64(field: &str, token: &str) -> Result<f64, SchemaError> {
    let v: f64 = token
        .parse()
        .map_err(|_| SchemaError::new(field, format!("`{token}` is not a number")))?;
    if !v.is_finite() {
        return Err(SchemaError::new(field, format!("`{token}` is not finite")));
    }
    Ok(v)
}

/// Splits `id "name with spaces" 1.0 2.0` style lines: whitespace-separated
/// tokens, with one optional double-quoted token.
fn split_quoted(field: &str, line: &str) -> Result<Vec<String>, SchemaError> {
    let mut tokens = Vec::new();
    let mut rest = line.trim();
    while !rest.is_empty() {
        if let Some(stripped) = rest.strip_prefix('"') {
            let close = stripped
                .find('"')
                .ok_or_else(|| SchemaError::new(field, "unterminated quote"))?;
            tokens.push(stripped[..close].to_string());
            rest = stripped[close + 1..].trim_start();
        } else {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            tokens.push(rest[..end].to_string());
            rest = rest[end..].trim_start();
        }
    }
    Ok(tokens)
}

struct Sections {
    id: Option<String>,
    map: Option<(f64, Vec<Vec<bool>>)>,
    landmarks: Option<Vec<Landmark>>,
    start: Option<Pose2D>,
    goal: Option<(f64, f64)>,
    instruction: Option<String>,
    subtasks: Option<Vec<Subtask>>,
    success_radius: Option<f64>,
}

fn take_block<'a>(
    field: &str,
    lines: &mut impl Iterator<Item = &'a str>,
) -> Result<Vec<&'a str>, SchemaError> {
    let mut block = Vec::new();
    for line in lines {
        if line.trim() == "end" {
            return Ok(block);
        }
        block.push(line);
    }
    Err(SchemaError::new(field, "block is missing its `end` line"))
}

fn parse_map_block(block: &[&str]) -> Result<(f64, Vec<Vec<bool>>), SchemaError> {
    let mut resolution = None;
    let mut rows_top_down: Vec<Vec<bool>> = Vec::new();
    for line in block {
        let line = line.trim();
        if let Some(value) = line.strip_prefix("resolution ") {
            if resolution.is_some() {
                return Err(SchemaError::new("map", "duplicate resolution"));
            }
            resolution = Some(parse_f64("map", value.trim())?);
        } else {
            let row: Vec<bool> = line
                .chars()
                .map(|c| match c {
                    '.' => Ok(false),
                    '#' => Ok(true),
                    other => {
                        Err(SchemaError::new("map", format!("unexpected cell character `{other}`")))
                    }
                })
                .collect::<Result<_, _>>()?;
            rows_top_down.push(row);
        }
    }
    let resolution = resolution.ok_or_else(|| SchemaError::new("map", "missing resolution"))?;
    if rows_top_down.is_empty() {
        return Err(SchemaError::new("map", "no grid rows"));
    }
    // Document rows are listed top-down; grid row 0 is y = 0.
    rows_top_down.reverse();
    Ok((resolution, rows_top_down))
}

fn parse_landmarks_block(block: &[&str]) -> Result<Vec<Landmark>, SchemaError> {
    block
        .iter()
        .map(|line| {
            let tokens = split_quoted("landmarks", line)?;
            if tokens.len() != 5 {
                return Err(SchemaError::new(
                    "landmarks",
                    format!("expected `id \"name\" x y radius`, got `{}`", line.trim()),
                ));
            }
            Ok(Landmark {
                id: tokens[0].clone(),
                name: tokens[1].clone(),
                position: (parse_f64("landmarks", &tokens[2])?, parse_f64("landmarks", &tokens[3])?),
                radius: parse_f64("landmarks", &tokens[4])?,
            })
        })
        .collect()
}

fn parse_subtasks_block(block: &[&str]) -> Result<Vec<Subtask>, SchemaError> {
    block
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let tokens = split_quoted("subtasks", line)?;
            let predicate = match tokens.first().map(String::as_str) {
                Some("reach") if tokens.len() == 5 => SubtaskPredicate::ReachRegion {
                    center: (
                        parse_f64("subtasks", &tokens[1])?,
                        parse_f64("subtasks", &tokens[2])?,
                    ),
                    radius: parse_f64("subtasks", &tokens[3])?,
                },
                Some("face") if tokens.len() == 5 => SubtaskPredicate::FaceLandmark {
                    landmark_id: tokens[1].clone(),
                    max_angle: parse_f64("subtasks", &tokens[2])?,
                    max_range: parse_f64("subtasks", &tokens[3])?,
                },
                _ => {
                    return Err(SchemaError::new(
                        "subtasks",
                        format!(
                            "expected `reach x y r \"text\"` or `face id angle range \"text\"`, got `{}`",
                            line.trim()
                        ),
                    ))
                }
            };
            Ok(Subtask { id: i, text: tokens[4].clone(), predicate })
        })
        .collect()
}

/// Parses and fully validates an episode document.
pub fn load_episode(text: &str) -> Result<Episode, SchemaError> {
    let mut sections = Sections {
        id: None,
        map: None,
        landmarks: None,
        start: None,
        goal: None,
        instruction: None,
        subtasks: None,
        success_radius: None,
    };

    let mut lines = text.lines().filter(|l| {
        let t = l.trim();
        !t.is_empty()
    });
    while let Some(line) = lines.next() {
        let line = line.trim();
        let (key, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };
        fn occupied(field: &str, taken: bool) -> Result<(), SchemaError> {
            if taken {
                Err(SchemaError::new(field, "duplicate section"))
            } else {
                Ok(())
            }
        }
        match key {
            "id" => {
                occupied("id", sections.id.is_some())?;
                if rest.is_empty() {
                    return Err(SchemaError::new("id", "must be non-empty"));
                }
                sections.id = Some(rest.to_string());
            }
            "map" => {
                occupied("map", sections.map.is_some())?;
                let block = take_block("map", &mut lines)?;
                sections.map = Some(parse_map_block(&block)?);
            }
            "landmarks" => {
                occupied("landmarks", sections.landmarks.is_some())?;
                let block = take_block("landmarks", &mut lines)?;
                sections.landmarks = Some(parse_landmarks_block(&block)?);
            }
            "start" => {
                occupied("start", sections.start.is_some())?;
                let t: Vec<&str> = rest.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(SchemaError::new("start", "expected `start x y yaw`"));
                }
                let (x, y, yaw) = (
                    parse_f64("start", t[0])?,
                    parse_f64("start", t[1])?,
                    parse_f64("start", t[2])?,
                );
                sections.start = Some(Pose2D::new(x, y, yaw));
            }
            "goal" => {
                occupied("goal", sections.goal.is_some())?;
                let t: Vec<&str> = rest.split_whitespace().collect();
                if t.len() != 2 {
                    return Err(SchemaError::new("goal", "expected `goal x y`"));
                }
                sections.goal = Some((parse_f64("goal", t[0])?, parse_f64("goal", t[1])?));
            }
            "instruction" => {
                occupied("instruction", sections.instruction.is_some())?;
                if rest.is_empty() {
                    return Err(SchemaError::new("instruction", "must be non-empty"));
                }
                sections.instruction = Some(rest.to_string());
            }
            "subtasks" => {
                occupied("subtasks", sections.subtasks.is_some())?;
                let block = take_block("subtasks", &mut lines)?;
                sections.subtasks = Some(parse_subtasks_block(&block)?);
            }
            "success_radius" => {
                occupied("success_radius", sections.success_radius.is_some())?;
                sections.success_radius = Some(parse_f64("success_radius", rest)?);
            }
            other => return Err(SchemaError::new(other, "unknown key")),
        }
    }

    let id = sections.id.ok_or_else(|| SchemaError::new("id", "missing"))?;
    let (resolution, rows) = sections.map.ok_or_else(|| SchemaError::new("map", "missing"))?;
    let landmarks = sections.landmarks.unwrap_or_default();
    let map = WorldMap::new(resolution, rows, landmarks)
        .map_err(|e| SchemaError::new("map", e.to_string()))?;
    let episode = Episode {
        id,
        map,
        start: sections.start.ok_or_else(|| SchemaError::new("start", "missing"))?,
        goal: sections.goal.ok_or_else(|| SchemaError::new("goal", "missing"))?,
        instruction: sections
            .instruction
            .ok_or_else(|| SchemaError::new("instruction", "missing"))?,
        subtasks: sections.subtasks.ok_or_else(|| SchemaError::new("subtasks", "missing"))?,
        success_radius: sections.success_radius.unwrap_or(DEFAULT_SUCCESS_RADIUS),
    };
    episode.validate()?;
    Ok(episode)
}

/// Renders an episode back to the document format. `load_episode` on the
/// output yields a value equal to the input.
pub fn serialize_episode(episode: &Episode) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "id {}", episode.id);
    let _ = writeln!(out, "map");
    let _ = writeln!(out, "resolution {}", episode.map.resolution());
    for iy in (0..episode.map.height()).rev() {
        let row: String = (0..episode.map.width())
            .map(|ix| if episode.map.cell_occupied(ix as isize, iy as isize) { '#' } else { '.' })
            .collect();
        let _ = writeln!(out, "{row}");
    }
    let _ = writeln!(out, "end");
    if !episode.map.landmarks().is_empty() {
        let _ = writeln!(out, "landmarks");
        for lm in episode.map.landmarks() {
            let _ = writeln!(
                out,
                "{} \"{}\" {} {} {}",
                lm.id, lm.name, lm.position.0, lm.position.1, lm.radius
            );
        }
        let _ = writeln!(out, "end");
    }
    let _ = writeln!(out, "start {} {} {}", episode.start.x, episode.start.y, episode.start.yaw);
    let _ = writeln!(out, "goal {} {}", episode.goal.0, episode.goal.1);
    let _ = writeln!(out, "instruction {}", episode.instruction);
    let _ = writeln!(out, "subtasks");
    for st in &episode.subtasks {
        match &st.predicate {
            SubtaskPredicate::ReachRegion { center, radius } => {
                let _ = writeln!(out, "reach {} {} {} \"{}\"", center.0, center.1, radius, st.text);
            }
            SubtaskPredicate::FaceLandmark { landmark_id, max_angle, max_range } => {
                let _ = writeln!(
                    out,
                    "face {} {} {} \"{}\"",
                    landmark_id, max_angle, max_range, st.text
                );
            }
        }
    }
    let _ = writeln!(out, "end");
    let _ = writeln!(out, "success_radius {}", episode.success_radius);
    out
}
