//! Case base as CSV triples: one row per problem pair plus one
//! `User_Task` row naming the solution.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Case, CaseBase, CaseBaseLayout, CbrError, ProblemPair};
use crate::snapshot::AttrKey;
use crate::task::{Expected, TaskId};

pub const CASE_HEADER: [&str; 5] = ["caseid", "subj", "prop", "obj", "usedtime"];
pub const TASK_PREDICATE: &str = "User_Task";

fn csv_err(e: csv::Error) -> CbrError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CbrError::Io(io),
        other => CbrError::Parse { line, message: format!("{other:?}") },
    }
}

impl CaseBase {
    /// Rows ordered by case id, then problem order, `User_Task` last.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), CbrError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CASE_HEADER).map_err(csv_err)?;
        for case in self.cases() {
            let id = case.case_id.to_string();
            let used = case.usedtime.to_string();
            for p in &case.problem {
                let obj = p.expected.to_string();
                w.write_record([&id, &p.key.subject, &p.key.predicate, &obj, &used]).map_err(csv_err)?;
            }
            let subject = self
                .layout()
                .location_predicates
                .iter()
                .find_map(|lp| case.problem.iter().find(|p| &p.key.predicate == lp))
                .or(case.problem.first())
                .map(|p| p.key.subject.clone())
                .unwrap_or_default();
            w.write_record([&id, &subject, TASK_PREDICATE, case.solution.as_str(), &used]).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, layout: CaseBaseLayout) -> Result<CaseBase, CbrError> {
        struct Partial {
            problem: Vec<ProblemPair>,
            solution: Option<TaskId>,
            usedtime: u64,
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.iter().map(str::trim).ne(CASE_HEADER) {
            return Err(CbrError::Parse { line: 1, message: format!("header must be {}", CASE_HEADER.join(",")) });
        }
        let mut cases: BTreeMap<u64, Partial> = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| CbrError::Parse { line, message };
            let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");
            let id: u64 = field(0).parse().map_err(|_| bad(format!("bad case id `{}`", field(0))))?;
            let used: u64 = field(4).parse().map_err(|_| bad(format!("bad usedtime `{}`", field(4))))?;
            let (subj, prop, obj) = (field(1), field(2), field(3));
            if subj.is_empty() || prop.is_empty() {
                return Err(bad("empty subject or predicate".into()));
            }
            let entry = cases.entry(id).or_insert(Partial { problem: Vec::new(), solution: None, usedtime: used });
            if entry.usedtime != used {
                return Err(bad(format!("case {id} has inconsistent usedtime")));
            }
            if prop == TASK_PREDICATE {
                if entry.solution.is_some() {
                    return Err(bad(format!("case {id} has two {TASK_PREDICATE} rows")));
                }
                entry.solution = Some(TaskId::parse(obj).map_err(|e| bad(e.to_string()))?);
                continue;
            }
            let expected = Expected::parse(obj).map_err(|e| bad(e.to_string()))?;
            let key = if layout.multi_valued.contains(prop) {
                AttrKey {
                    subject: subj.to_string(),
                    predicate: prop.to_string(),
                    qualifier: Some(expected.to_string()),
                }
            } else {
                AttrKey::new(subj, prop)
            };
            if entry.problem.iter().any(|p| p.key == key) {
                return Err(bad(format!("case {id} repeats attribute {key}")));
            }
            entry.problem.push(ProblemPair { key, expected });
        }
        let mut base = CaseBase::new(layout);
        for (id, p) in cases {
            let solution = p
                .solution
                .ok_or(CbrError::Parse { line: 0, message: format!("case {id} has no {TASK_PREDICATE} row") })?;
            base.insert(Case { case_id: id, problem: p.problem, solution, usedtime: p.usedtime });
        }
        Ok(base)
    }
}

pub fn persist_case_base(base: &CaseBase, path: &Path) -> Result<(), CbrError> {
    base.write_csv(File::create(path)?)
}

pub fn load_case_base(path: &Path, layout: CaseBaseLayout) -> Result<CaseBase, CbrError> {
    CaseBase::read_csv(File::open(path)?, layout)
}
