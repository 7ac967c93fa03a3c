// Keyboard shortcuts for the judgment flow: v = valid, x = invalid,
// m = toggle MD, i = toggle MI, Enter = submit. Disabled while typing in
// form fields so notes never trigger actions.

import { useEffect } from 'react';

export interface ShortcutHandlers {
  onValid: () => void;
  onInvalid: () => void;
  onToggleMd: () => void;
  onToggleMi: () => void;
  onSubmit: () => void;
  enabled: boolean;
}

export function useKeyboardShortcuts({
  onValid,
  onInvalid,
  onToggleMd,
  onToggleMi,
  onSubmit,
  enabled,
}: ShortcutHandlers) {
  useEffect(() => {
    if (!enabled) return;

    const handleKeyDown = (event: KeyboardEvent) => {
      if (
        event.target instanceof HTMLInputElement ||
        event.target instanceof HTMLTextAreaElement
      ) {
        return;
      }
      switch (event.key) {
        case 'v':
        case 'V':
          event.preventDefault();
          onValid();
          break;
        case 'x':
        case 'X':
          event.preventDefault();
          onInvalid();
          break;
        case 'm':
        case 'M':
          event.preventDefault();
          onToggleMd();
          break;
        case 'i':
        case 'I':
          event.preventDefault();
          onToggleMi();
          break;
        case 'Enter':
          event.preventDefault();
          onSubmit();
          break;
      }
    };

    window.addEventListener('keydown', handleKeyDown);
    return () => window.removeEventListener('keydown', handleKeyDown);
  }, [enabled, onValid, onInvalid, onToggleMd, onToggleMi, onSubmit]);
}
