import logging
from pathlib import Path

from occluded_reid import (
    TrainConfig,
    evaluate_network,
    generate_synthetic_dataset,
    held_in_split,
    train,
)

logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")

# Load config from YAML file
config = TrainConfig.from_yaml(Path("reid_config.yaml"), base=TrainConfig.toy())
size = (config.encoder.image_height, config.encoder.image_width)

data = generate_synthetic_dataset(10, 8, 4, seed=7, size=size)

print("=" * 60)
print("Occluded ReID demo")
print(f"{len(data)} synthetic images, {config.epochs} epochs, lam={config.loss.lam}")
print(f"Config digest: {config.digest()}")
print("=" * 60)

result = train(data, config, Path("runs/demo"))
query, gallery = held_in_split(data)
metrics = evaluate_network(result.network, query, gallery)

print("=" * 60)
print(f"mAP    {metrics.mean_ap:.4f}")
print(f"Rank-1 {metrics.rank1:.4f}")
print(f"Rank-5 {metrics.rank(5):.4f}")
print(f"Checkpoint: {result.checkpoint_path}")
print("=" * 60)
