//! A miniature accuracy-versus-budget sweep using the experiment harness,
//! printing the result CSV and its plot-data form.

use catsearch::harness::{emit_plot_data, parse_config, rows_to_csv, run_experiment};
use catsearch::Result;

fn main() -> Result<()> {
    let config = parse_config(
        "experiment = sweep-demo\n\
         seed = 9\n\
         trials = 300\n\
         tasks.tau = 0.7\n\
         tasks.depth = 4\n\
         tasks.answer_space = 8\n\
         tasks.mix = 1:0.4:0.6,1:0.6:0.8\n\
         prm.oracle_eps = 0.05\n\
         strategies = best_of_n,beam,majority_vote\n\
         beam.width = 4\n\
         sweep.n = 4,8,16,32,64\n",
    )?;
    let rows = run_experiment(&config.experiment, None)?;
    print!("{}", rows_to_csv(&rows));
    println!();
    print!("{}", emit_plot_data(&rows)?);
    Ok(())
}
