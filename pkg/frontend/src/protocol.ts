// Wire messages exchanged with the gateway, one JSON object per text frame.

export interface HelloMessage {
  kind: 'hello'
  client_version: string
}

export interface HelloAckMessage {
  kind: 'hello_ack'
  session_id: string
  capture_hz: number
}

export interface FrameMessage {
  kind: 'frame'
  session_id: string
  seq: number
  captured_at_ms: number
  jpeg_b64: string
}

export interface AudioMessage {
  kind: 'audio'
  session_id: string
  batch_index: number
  category: string
  mime: string
  audio_b64: string
}

export interface CaptionMessage {
  kind: 'caption'
  session_id: string
  batch_index: number
  text: string
}

export interface ErrorMessage {
  kind: 'error'
  code: string
  message: string
}

export interface ByeMessage {
  kind: 'bye'
  session_id: string
}

export type ServerMessage = HelloAckMessage | AudioMessage | CaptionMessage | ErrorMessage

export function parseServerMessage(raw: string): ServerMessage | null {
  try {
    const msg = JSON.parse(raw)
    if (msg && typeof msg.kind === 'string') return msg as ServerMessage
  } catch {
    // fall through
  }
  return null
}

export function encodeBase64(bytes: Uint8Array): string {
  if (typeof Buffer !== 'undefined') return Buffer.from(bytes).toString('base64')
  let binary = ''
  for (let i = 0; i < bytes.length; i += 0x8000) {
    binary += String.fromCharCode(...bytes.subarray(i, i + 0x8000))
  }
  return btoa(binary)
}

export function decodeBase64(text: string): Uint8Array {
  if (typeof Buffer !== 'undefined') return new Uint8Array(Buffer.from(text, 'base64'))
  const binary = atob(text)
  const bytes = new Uint8Array(binary.length)
  for (let i = 0; i < binary.length; i++) bytes[i] = binary.charCodeAt(i)
  return bytes
}
