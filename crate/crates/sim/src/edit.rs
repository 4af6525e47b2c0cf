//! Random edit scripts over a synthetic repository, for checking alignment
//! against a rebuild of the edited worktree.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::generate::{Call, FuncModel, SyntheticRepo};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", content = "path", rename_all = "snake_case")]
pub enum EditOp {
    Add(String),
    Modify(String),
    Delete(String),
}

/// Applies `ops` random edits to the model and the worktree at `root`.
///
/// Modifications drop background functions other files may call, add
/// functions whose names collide with existing ones, rewire calls and
/// change imports, so dependent files must be re-linked. Planted targets
/// are never modified, though deleting their file removes them.
pub fn apply_edit_script(repo: &mut SyntheticRepo, root: &Path, ops: usize, seed: u64) -> Result<Vec<EditOp>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut script = Vec::with_capacity(ops);
    for _ in 0..ops {
        let op = match rng.gen_range(0..10) {
            0..=5 => modify(repo, &mut rng),
            6 | 7 => add(repo, &mut rng),
            8 if repo.files.len() > 1 => delete(repo, &mut rng),
            _ => touch_extra(repo, &mut rng),
        };
        match &op {
            EditOp::Delete(p) => {
                let full = root.join(p);
                if full.exists() {
                    fs::remove_file(full)?;
                }
            }
            EditOp::Add(p) | EditOp::Modify(p) => repo.write_one(root, p)?,
        }
        script.push(op);
    }
    Ok(script)
}

fn modify(repo: &mut SyntheticRepo, rng: &mut ChaCha8Rng) -> EditOp {
    let paths = repo.module_paths();
    let path = paths.choose(rng).unwrap().clone();
    match rng.gen_range(0..5) {
        0 => {
            // drop a background function
            let file = repo.files.get_mut(&path).unwrap();
            let droppable: Vec<usize> = (0..file.funcs.len())
                .filter(|&i| file.funcs[i].name.starts_with('f'))
                .collect();
            if droppable.len() > 1 {
                let i = *droppable.choose(rng).unwrap();
                file.funcs.remove(i);
            }
        }
        1 => {
            // define a name that already exists elsewhere
            let others: Vec<String> = repo
                .files
                .iter()
                .filter(|(p, _)| **p != path)
                .flat_map(|(_, f)| f.funcs.iter().map(|g| g.name.clone()))
                .filter(|n| n.starts_with('f'))
                .collect();
            if let Some(name) = others.choose(rng) {
                let file = repo.files.get_mut(&path).unwrap();
                if !file.defines(name) {
                    file.funcs.push(FuncModel {
                        name: name.clone(),
                        calls: Vec::new(),
                    });
                }
            }
        }
        2 => {
            let index = repo.next_index;
            repo.next_index += 1;
            let name = format!("f{index:04}_0");
            let calls = repo.background_calls(rng, &path, &name);
            repo.files.get_mut(&path).unwrap().funcs.push(FuncModel { name, calls });
        }
        3 => {
            let names: Vec<String> = repo.files[&path]
                .funcs
                .iter()
                .filter(|f| f.name.starts_with('f'))
                .map(|f| f.name.clone())
                .collect();
            if let Some(name) = names.choose(rng) {
                let mut calls = repo.background_calls(rng, &path, name);
                if calls.is_empty() {
                    calls.extend(repo.background_call(rng, &path, name));
                }
                if let Some(call) = calls.first().cloned() {
                    // flip how the call is written
                    let flipped = match call {
                        Call::Bare(n) => repo.background_call(rng, &path, name).unwrap_or(Call::Bare(n)),
                        other => other,
                    };
                    calls[0] = flipped;
                }
                let f = repo
                    .files
                    .get_mut(&path)
                    .unwrap()
                    .funcs
                    .iter_mut()
                    .find(|f| &f.name == name)
                    .unwrap();
                f.calls = calls;
            }
        }
        _ => {
            let file = repo.files.get_mut(&path).unwrap();
            if !file.imports.is_empty() && rng.gen_bool(0.5) {
                let first = file.imports.iter().next().cloned().unwrap();
                file.imports.remove(&first);
            } else {
                repo.extra_imports(rng, &path);
                let index = repo.next_index;
                repo.next_index += 1;
                repo.maybe_class(rng, &path, index);
            }
        }
    }
    EditOp::Modify(path)
}

fn add(repo: &mut SyntheticRepo, rng: &mut ChaCha8Rng) -> EditOp {
    let index = repo.next_index;
    repo.next_index += 1;
    let path = repo.module_path(index % (repo.spec.file_count.max(1) * 2));
    let path = if repo.files.contains_key(&path) {
        repo.module_path(index)
    } else {
        path
    };
    let file = repo.empty_file(rng, index);
    repo.files.insert(path.clone(), file);
    repo.wire_calls(rng, &path);
    repo.maybe_class(rng, &path, index);
    repo.extra_imports(rng, &path);
    EditOp::Add(path)
}

fn delete(repo: &mut SyntheticRepo, rng: &mut ChaCha8Rng) -> EditOp {
    let paths = repo.module_paths();
    let path = paths.choose(rng).unwrap().clone();
    repo.files.remove(&path);
    repo.planted.retain(|p| p.path != path);
    EditOp::Delete(path)
}

fn touch_extra(repo: &mut SyntheticRepo, rng: &mut ChaCha8Rng) -> EditOp {
    match rng.gen_range(0..3) {
        0 => {
            let text = repo.readme(rng);
            repo.extras.insert("README.md".into(), text);
            EditOp::Modify("README.md".into())
        }
        1 => {
            let text = repo.pyproject(rng);
            repo.extras.insert("pyproject.toml".into(), text);
            EditOp::Modify("pyproject.toml".into())
        }
        _ => {
            let paths = repo.module_paths();
            let target = paths.choose(rng).unwrap().clone();
            match repo.test_module(&target) {
                Some((p, text)) => {
                    let op = if repo.extras.contains_key(&p) {
                        EditOp::Modify(p.clone())
                    } else {
                        EditOp::Add(p.clone())
                    };
                    repo.extras.insert(p, text);
                    op
                }
                None => {
                    let text = repo.readme(rng);
                    repo.extras.insert("README.md".into(), text);
                    EditOp::Modify("README.md".into())
                }
            }
        }
    }
}
