mod cli;
mod commands;
mod util;

use clap::Parser;
use cli::{Cli, Cmd, EvalCmd};
use std::process::ExitCode;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let parsed = Cli::parse();
    let result = match &parsed.cmd {
        Cmd::Train(args) => commands::cmd_train(args, &argv),
        Cmd::Eval(eval) => match &eval.protocol {
            EvalCmd::Test(args) => commands::cmd_eval_test(args, &argv),
            EvalCmd::Ood(args) => commands::cmd_eval_ood(args, &argv),
            EvalCmd::Rotate(args) => commands::cmd_eval_rotate(args, &argv),
            EvalCmd::Adversarial(args) => commands::cmd_eval_adversarial(args, &argv),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
