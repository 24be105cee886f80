// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use cdrwealth::cli::{self, PipelineConfig, Stage};

/// Socio-economic indicators from call detail records and airtime top-ups.
#[derive(Debug, Parser)]
#[command(name = "cdrwealth", version)]
struct Args {
    /// Pipeline stage to run.
    #[arg(value_enum)]
    stage: Stage,

    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long)]
    seed: Option<u64>,

    /// Modularity resolution γ.
    #[arg(long)]
    resolution: Option<f64>,

    #[arg(long = "min-months")]
    min_months: Option<usize>,

    #[arg(long = "min-users")]
    min_users: Option<usize>,

    #[arg(long = "max-contacts")]
    max_contacts: Option<usize>,

    #[arg(long)]
    asymmetry: Option<f64>,

    #[arg(long)]
    shuffles: Option<usize>,

    /// Any other configuration key, e.g. `--set p_out=0.001`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Args {
    fn overrides(&self) -> Result<Vec<(String, String)>, String> {
        let mut out = Vec::new();
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
            out.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        let mut flag = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key.to_owned(), v));
            }
        };
        flag("out", self.out.as_ref().map(|p| p.display().to_string()));
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("resolution", self.resolution.map(|v| v.to_string()));
        flag("min_months", self.min_months.map(|v| v.to_string()));
        flag("min_users", self.min_users.map(|v| v.to_string()));
        flag("max_contacts", self.max_contacts.map(|v| v.to_string()));
        flag("asymmetry", self.asymmetry.map(|v| v.to_string()));
        flag("shuffles", self.shuffles.map(|v| v.to_string()));
        Ok(out)
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let overrides = match args.overrides() {
        Ok(o) => o,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let result = PipelineConfig::load(args.config.as_deref(), &overrides)
        .and_then(|cfg| cli::run(args.stage, &cfg));
    match result {
        Ok(manifest) => {
            eprintln!(
                "{}: wrote {} artifacts",
                manifest.command,
                manifest.artifacts.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
