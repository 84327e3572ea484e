use clap::Parser;

#[derive(Parser)]
#[command(name = "epseg-service", version, about = "Extreme-points segmentation HTTP service")]
struct Cli {
    #[command(flatten)]
    serve: epseg_service::ServeArgs,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    epseg_service::serve(Cli::parse().serve).await
}
