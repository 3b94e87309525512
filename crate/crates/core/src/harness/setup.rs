//! Turning a task into an initial sandbox state.

use crate::backend::Backend;
use crate::geometry::ScreenGeometry;
use crate::sim::{SimConfig, DEFAULT_RNG_SEED};

use super::task::TaskSpec;
use super::HarnessError;

/// Simulated-backend config with the task's seed files and attachments.
pub fn sim_config(task: &TaskSpec, geometry: ScreenGeometry) -> Result<SimConfig, HarnessError> {
    Ok(SimConfig {
        geometry,
        seed_files: task.initial_files()?,
        entry_file: task.entry_file.clone(),
        rng_seed: DEFAULT_RNG_SEED,
    })
}

/// Brings a freshly created backend to the task's initial state: writes seed
/// files when `write_seeds` (backends that were not created from a config
/// carrying them), runs every setup command in order and opens the entry
/// file. Any nonzero setup exit is fatal.
pub fn prepare_backend(
    task: &TaskSpec,
    backend: &mut dyn Backend,
    write_seeds: bool,
) -> Result<(), HarnessError> {
    if write_seeds {
        for (path, bytes) in task.initial_files()? {
            backend
                .write_file(&path, &bytes)
                .map_err(|e| HarnessError::SetupFailed {
                    command: format!("write {path}"),
                    exit_code: -1,
                    output: e.to_string(),
                })?;
        }
    }
    for cmd in &task.setup {
        let out = backend.exec(cmd).map_err(|e| HarnessError::SetupFailed {
            command: cmd.clone(),
            exit_code: -1,
            output: e.to_string(),
        })?;
        if out.exit_code != 0 {
            return Err(HarnessError::SetupFailed {
                command: cmd.clone(),
                exit_code: out.exit_code,
                output: out.output,
            });
        }
    }
    if let Some(entry) = &task.entry_file {
        backend
            .open_editor(entry)
            .map_err(|e| HarnessError::SetupFailed {
                command: format!("open {entry}"),
                exit_code: -1,
                output: e.to_string(),
            })?;
    }
    Ok(())
}
