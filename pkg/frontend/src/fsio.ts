/**
 * Filesystem save/load for tfjs layers models using plain `fs`, since the
 * browser build of tfjs ships no file:// IO handler. Layout matches the
 * standard converter output: `model.json` plus a binary weight shard.
 */

import { mkdirSync, readFileSync, writeFileSync } from 'fs'
import { join } from 'path'
import * as tf from '@tensorflow/tfjs'

const WEIGHTS_FILE = 'weights.bin'

export async function saveLayersModelToDir(
  model: tf.LayersModel,
  dir: string,
): Promise<void> {
  mkdirSync(dir, { recursive: true })
  await model.save({
    save: async artifacts => {
      const weightData = artifacts.weightData as ArrayBuffer
      writeFileSync(join(dir, WEIGHTS_FILE), Buffer.from(weightData))
      const manifest = {
        modelTopology: artifacts.modelTopology,
        weightsManifest: [
          { paths: [WEIGHTS_FILE], weights: artifacts.weightSpecs },
        ],
      }
      writeFileSync(join(dir, 'model.json'), JSON.stringify(manifest))
      return {
        modelArtifactsInfo: {
          dateSaved: new Date(),
          modelTopologyType: 'JSON' as const,
        },
      }
    },
  })
}

export async function loadLayersModelFromDir(dir: string): Promise<tf.LayersModel> {
  const manifestPath = join(dir, 'model.json')
  const doc = JSON.parse(readFileSync(manifestPath, 'utf-8'))
  const weightSpecs: tf.io.WeightsManifestEntry[] = []
  const buffers: Buffer[] = []
  for (const group of doc.weightsManifest ?? []) {
    weightSpecs.push(...group.weights)
    for (const path of group.paths) {
      buffers.push(readFileSync(join(dir, path)))
    }
  }
  const joined = Buffer.concat(buffers)
  const weightData = joined.buffer.slice(
    joined.byteOffset,
    joined.byteOffset + joined.byteLength,
  )
  return tf.loadLayersModel({
    load: async () => ({
      modelTopology: doc.modelTopology,
      weightSpecs,
      weightData,
    }),
  })
}
