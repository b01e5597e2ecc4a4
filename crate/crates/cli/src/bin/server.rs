use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use pointchat_core::config::Config;
use pointchat_core::engine::Engine;

#[derive(Parser)]
#[command(name = "pointchat-server", about = "Serve pointchat sessions over HTTP")]
struct Args {
    /// TOML config file; POINTCHAT_* environment variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    listen: Option<String>,
    #[arg(long)]
    artifact_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let args = Args::parse();
    let mut config = Config::load(args.config.as_deref())?;
    if let Some(l) = args.listen {
        config.listen = l;
    }
    if let Some(d) = args.artifact_dir {
        config.artifact_dir = d;
    }
    let base = args.config.as_deref().and_then(|p| p.parent()).map(PathBuf::from).unwrap_or_default();
    let listen = config.listen.clone();
    let engine = tokio::task::spawn_blocking(move || Engine::from_config(config, &base)).await??;
    tracing::info!(tools = engine.registry().len(), "registry ready");
    let listener = tokio::net::TcpListener::bind(&listen).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    pointchat_service::serve(Arc::new(engine), listener).await?;
    Ok(())
}
