use voxkit_core::bench::{
    simulate_latency_sweep, simulate_scaling_compare, write_scaling_outputs, write_sweep_outputs,
    BenchError, DelayModel,
};

use crate::{BenchArgs, Failure};

fn classify(e: BenchError) -> Failure {
    match e {
        BenchError::InvalidInput(_) => Failure::usage(e),
        _ => Failure::runtime(e),
    }
}

fn load_model(args: &BenchArgs) -> Result<DelayModel, Failure> {
    if args.point_fit {
        return Ok(DelayModel::point_fit());
    }
    let Some(path) = &args.delay_model else {
        return Ok(DelayModel::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("delay model {}: {e}", path.display())))
}

pub fn run(args: BenchArgs) -> Result<(), Failure> {
    let model = load_model(&args)?;
    model.validate().map_err(classify)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(Failure::runtime)?;
    }

    let sweep = simulate_latency_sweep(&args.sizes, &model, args.trials).map_err(classify)?;
    print!("{}", sweep.to_csv());
    println!(
        "# max waiting overhead {:.6} s, wall variation {:.4}",
        sweep.max_overhead_s(),
        sweep.wall_variation()
    );
    if let Some(dir) = &args.out {
        write_sweep_outputs(dir, "latency_sweep", &sweep).map_err(classify)?;
    }

    if args.scaling {
        let scaling = simulate_scaling_compare(&args.sizes, &model, args.trials).map_err(classify)?;
        print!("{}", scaling.to_csv());
        if let Some(dir) = &args.out {
            write_scaling_outputs(dir, "scaling", &scaling).map_err(classify)?;
        }
    }
    Ok(())
}
