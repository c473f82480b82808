/**
 * Run-manifest emission. If the manifest already exists its unrelated
 * fields (budget, seed, labels, clusters, ...) are preserved; the extractor
 * only owns the matrix paths, the shape fields, and its own metadata block.
 */

import { existsSync, readFileSync, writeFileSync } from 'fs'
import { dirname, relative } from 'path'

export interface ExtractorMetadata {
  backbone?: string
  model?: string
  input_size?: number
  softmax_applied?: boolean
  image_order: string[]
}

export function emitManifest(
  manifestPath: string,
  updates: {
    features?: string
    probabilities?: string
    n: number
    m?: number
    d?: number
    extractor: ExtractorMetadata
  },
): void {
  let doc: Record<string, unknown> = {}
  if (existsSync(manifestPath)) {
    doc = JSON.parse(readFileSync(manifestPath, 'utf-8'))
  }
  const base = dirname(manifestPath)
  if (updates.features) doc.features = relative(base, updates.features) || updates.features
  if (updates.probabilities) {
    doc.probabilities = relative(base, updates.probabilities) || updates.probabilities
  }
  doc.n = updates.n
  if (updates.m !== undefined) doc.m = updates.m
  if (updates.d !== undefined) doc.d = updates.d
  const previous = (doc.extractor ?? {}) as Record<string, unknown>
  doc.extractor = { ...previous, ...updates.extractor }
  if (doc.seed === undefined) doc.seed = 0
  writeFileSync(manifestPath, JSON.stringify(doc, sortedKeys(doc), 2) + '\n')
}

function sortedKeys(doc: Record<string, unknown>): string[] {
  const keys = new Set<string>()
  const walk = (value: unknown): void => {
    if (Array.isArray(value)) value.forEach(walk)
    else if (value && typeof value === 'object') {
      for (const [k, v] of Object.entries(value)) {
        keys.add(k)
        walk(v)
      }
    }
  }
  walk(doc)
  return [...keys].sort()
}
